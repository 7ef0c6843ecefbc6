#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace shmfcn::nn {

enum class Mode { Train, Infer };

/// Dense (batch, channels, length) activations, contiguous [batch][channel][time].
template <typename Real>
struct Tensor3 {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<Real> data;

    Tensor3() = default;
    Tensor3(std::size_t b, std::size_t c, std::size_t l, Real fill = Real(0))
        : batch(b), channels(c), length(l), data(b * c * l, fill) {}

    void resize(std::size_t b, std::size_t c, std::size_t l) {
        batch = b;
        channels = c;
        length = l;
        data.assign(b * c * l, Real(0));
    }
    std::size_t size() const { return data.size(); }
    Real* row(std::size_t b, std::size_t c) { return data.data() + (b * channels + c) * length; }
    const Real* row(std::size_t b, std::size_t c) const { return data.data() + (b * channels + c) * length; }
    Real& operator()(std::size_t b, std::size_t c, std::size_t t) { return row(b, c)[t]; }
    Real operator()(std::size_t b, std::size_t c, std::size_t t) const { return row(b, c)[t]; }
};

/// Row-major (rows, cols) matrix used for pooled features, scores and probabilities.
template <typename Real>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), data(r * c, fill) {}
    Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    Real operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    Real* row(std::size_t r) { return data.data() + r * cols; }
    const Real* row(std::size_t r) const { return data.data() + r * cols; }
};

/// Weights of one valid 1-D convolution: (out, in, kernel) plus one bias per map.
template <typename Real>
struct ConvRef {
    std::span<const Real> weights;
    std::span<const Real> bias;
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel = 0;
};

template <typename Real>
struct ConvGrad {
    std::span<Real> weights;
    std::span<Real> bias;
};

/// y[b,o,t] = bias[o] + sum_i sum_q w[o,i,q] x[b,i,t+q]; stride 1, no padding.
template <typename Real>
void conv1d_forward(const Tensor3<Real>& x, const ConvRef<Real>& p, Tensor3<Real>& y, unsigned threads = 1);

/// Exact gradients. `dx` may be null when the input gradient is not needed.
/// Weight gradients are accumulated per output map over the batch in index
/// order, so the result does not depend on `threads`.
template <typename Real>
void conv1d_backward(const Tensor3<Real>& x, const ConvRef<Real>& p, const Tensor3<Real>& dy, Tensor3<Real>* dx,
                     ConvGrad<Real> grad, unsigned threads = 1);

template <typename Real>
struct BatchNormRef {
    std::span<const Real> scale;
    std::span<const Real> shift;
    double epsilon = 1e-5;
    double momentum = 0.9;
};

/// Per-channel statistics of the last training-mode forward pass.
template <typename Real>
struct BatchNormCache {
    Tensor3<Real> xhat;
    std::vector<double> inv_std;
};

/// Train mode: normalize with batch statistics over (batch, time), update
/// running stats as running = momentum * running + (1 - momentum) * batch.
/// Requires batch >= 2.
template <typename Real>
void batchnorm_forward_train(const Tensor3<Real>& x, const BatchNormRef<Real>& p, std::span<Real> running_mean,
                             std::span<Real> running_var, Tensor3<Real>& y, BatchNormCache<Real>& cache,
                             unsigned threads = 1);

template <typename Real>
void batchnorm_forward_infer(const Tensor3<Real>& x, const BatchNormRef<Real>& p, std::span<const Real> running_mean,
                             std::span<const Real> running_var, Tensor3<Real>& y, unsigned threads = 1);

/// Gradient through the normalization including the batch statistics.
template <typename Real>
void batchnorm_backward(const Tensor3<Real>& dy, const BatchNormRef<Real>& p, const BatchNormCache<Real>& cache,
                        Tensor3<Real>& dx, std::span<Real> dscale, std::span<Real> dshift, unsigned threads = 1);

template <typename Real>
void relu_forward(const Tensor3<Real>& x, Tensor3<Real>& y);

/// Passes the gradient where the forward input was > 0 (derivative at 0 is 0).
template <typename Real>
void relu_backward(const Tensor3<Real>& x, const Tensor3<Real>& dy, Tensor3<Real>& dx);

/// Mean over time per (batch, channel).
template <typename Real>
Matrix<Real> global_average_pool(const Tensor3<Real>& x);

template <typename Real>
void global_average_pool_backward(const Matrix<Real>& dfeatures, std::size_t length, Tensor3<Real>& dx);

/// scores = features * theta + bias, theta stored (features, classes) row-major.
template <typename Real>
Matrix<Real> head_scores(const Matrix<Real>& features, std::span<const Real> theta, std::span<const Real> bias,
                         std::size_t classes);

/// Row-wise softmax with max-score subtraction.
template <typename Real>
Matrix<Real> softmax(const Matrix<Real>& scores);

template <typename Real>
void head_backward(const Matrix<Real>& features, std::span<const Real> theta, const Matrix<Real>& dscores,
                   std::span<Real> dtheta, std::span<Real> dbias, Matrix<Real>& dfeatures);

inline constexpr double kLogClamp = 1e-12;

template <typename Real>
struct CrossEntropy {
    double loss = 0.0;
    Matrix<Real> dscores;  // (p - onehot) / batch
    std::size_t clamped = 0;
};

/// Mean negative log-probability of the true classes. Probabilities below
/// 1e-12 are clamped inside the log and counted.
template <typename Real>
CrossEntropy<Real> cross_entropy(const Matrix<Real>& probs, std::span<const int> labels);

/// Throws NumericError naming `what` if any value is not finite.
template <typename Real>
void require_finite(std::span<const Real> values, const char* what);

}  // namespace shmfcn::nn
