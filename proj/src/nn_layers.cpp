#include "shmfcn/nn_layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "shmfcn/errors.hpp"
#include "shmfcn/parallel.hpp"

namespace shmfcn::nn {

namespace {

template <typename Real>
inline void axpy(Real* y, const Real* x, Real a, std::size_t n) {
    for (std::size_t t = 0; t < n; ++t) y[t] += a * x[t];
}

// Fixed 8-lane split so the compiler can vectorize without reassociating.
template <typename Real>
inline double dot(const Real* a, const Real* b, std::size_t n) {
    Real acc[8] = {};
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8)
        for (int k = 0; k < 8; ++k) acc[k] += a[t + k] * b[t + k];
    double s = 0.0;
    for (int k = 0; k < 8; ++k) s += static_cast<double>(acc[k]);
    for (; t < n; ++t) s += static_cast<double>(a[t]) * static_cast<double>(b[t]);
    return s;
}

template <typename Real>
inline double sum(const Real* a, std::size_t n) {
    Real acc[8] = {};
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8)
        for (int k = 0; k < 8; ++k) acc[k] += a[t + k];
    double s = 0.0;
    for (int k = 0; k < 8; ++k) s += static_cast<double>(acc[k]);
    for (; t < n; ++t) s += static_cast<double>(a[t]);
    return s;
}

template <typename Real>
void check_conv(const Tensor3<Real>& x, const ConvRef<Real>& p) {
    if (p.kernel < 1) throw DomainError("conv1d: kernel must be >= 1");
    if (x.channels != p.in_channels)
        throw DomainError("conv1d: input has " + std::to_string(x.channels) + " channels, layer expects " +
                          std::to_string(p.in_channels));
    if (x.length < p.kernel)
        throw DomainError("conv1d: input length " + std::to_string(x.length) + " shorter than kernel " +
                          std::to_string(p.kernel));
    if (p.weights.size() != p.out_channels * p.in_channels * p.kernel || p.bias.size() != p.out_channels)
        throw DomainError("conv1d: parameter shapes inconsistent");
}

}  // namespace

template <typename Real>
void conv1d_forward(const Tensor3<Real>& x, const ConvRef<Real>& p, Tensor3<Real>& y, unsigned threads) {
    check_conv(x, p);
    const std::size_t lout = x.length - p.kernel + 1;
    y.resize(x.batch, p.out_channels, lout);
    parallel_for(x.batch, threads, [&](std::size_t b) {
        for (std::size_t o = 0; o < p.out_channels; ++o) {
            Real* yr = y.row(b, o);
            std::fill(yr, yr + lout, p.bias[o]);
            for (std::size_t i = 0; i < p.in_channels; ++i) {
                const Real* xr = x.row(b, i);
                const Real* w = p.weights.data() + (o * p.in_channels + i) * p.kernel;
                for (std::size_t q = 0; q < p.kernel; ++q) axpy(yr, xr + q, w[q], lout);
            }
        }
    });
}

template <typename Real>
void conv1d_backward(const Tensor3<Real>& x, const ConvRef<Real>& p, const Tensor3<Real>& dy, Tensor3<Real>* dx,
                     ConvGrad<Real> grad, unsigned threads) {
    check_conv(x, p);
    const std::size_t lout = x.length - p.kernel + 1;
    if (dy.batch != x.batch || dy.channels != p.out_channels || dy.length != lout)
        throw DomainError("conv1d backward: upstream gradient shape mismatch");
    if (grad.weights.size() != p.weights.size() || grad.bias.size() != p.bias.size())
        throw DomainError("conv1d backward: gradient buffer shape mismatch");

    parallel_for(p.out_channels, threads, [&](std::size_t o) {
        double db = 0.0;
        for (std::size_t b = 0; b < x.batch; ++b) db += sum(dy.row(b, o), lout);
        grad.bias[o] = static_cast<Real>(db);
        for (std::size_t i = 0; i < p.in_channels; ++i)
            for (std::size_t q = 0; q < p.kernel; ++q) {
                double acc = 0.0;
                for (std::size_t b = 0; b < x.batch; ++b) acc += dot(dy.row(b, o), x.row(b, i) + q, lout);
                grad.weights[(o * p.in_channels + i) * p.kernel + q] = static_cast<Real>(acc);
            }
    });

    if (!dx) return;
    dx->resize(x.batch, x.channels, x.length);
    parallel_for(x.batch, threads, [&](std::size_t b) {
        for (std::size_t i = 0; i < p.in_channels; ++i) {
            Real* dxr = dx->row(b, i);
            for (std::size_t o = 0; o < p.out_channels; ++o) {
                const Real* dyr = dy.row(b, o);
                const Real* w = p.weights.data() + (o * p.in_channels + i) * p.kernel;
                for (std::size_t q = 0; q < p.kernel; ++q) axpy(dxr + q, dyr, w[q], lout);
            }
        }
    });
}

template <typename Real>
void batchnorm_forward_train(const Tensor3<Real>& x, const BatchNormRef<Real>& p, std::span<Real> running_mean,
                             std::span<Real> running_var, Tensor3<Real>& y, BatchNormCache<Real>& cache,
                             unsigned threads) {
    if (x.batch < 2) throw DomainError("batchnorm: train mode needs batch >= 2, got " + std::to_string(x.batch));
    const std::size_t c = x.channels;
    if (p.scale.size() != c || p.shift.size() != c || running_mean.size() != c || running_var.size() != c)
        throw DomainError("batchnorm: parameter shapes inconsistent");
    y.resize(x.batch, c, x.length);
    cache.xhat.resize(x.batch, c, x.length);
    cache.inv_std.assign(c, 0.0);
    const double count = static_cast<double>(x.batch * x.length);
    parallel_for(c, threads, [&](std::size_t ch) {
        double s = 0.0;
        for (std::size_t b = 0; b < x.batch; ++b) s += sum(x.row(b, ch), x.length);
        const double mean = s / count;
        double ss = 0.0;
        for (std::size_t b = 0; b < x.batch; ++b) {
            const Real* xr = x.row(b, ch);
            for (std::size_t t = 0; t < x.length; ++t) {
                const double d = static_cast<double>(xr[t]) - mean;
                ss += d * d;
            }
        }
        const double var = ss / count;
        const double inv_std = 1.0 / std::sqrt(var + p.epsilon);
        cache.inv_std[ch] = inv_std;
        const Real g = p.scale[ch];
        const Real beta = p.shift[ch];
        for (std::size_t b = 0; b < x.batch; ++b) {
            const Real* xr = x.row(b, ch);
            Real* hr = cache.xhat.row(b, ch);
            Real* yr = y.row(b, ch);
            for (std::size_t t = 0; t < x.length; ++t) {
                hr[t] = static_cast<Real>((static_cast<double>(xr[t]) - mean) * inv_std);
                yr[t] = g * hr[t] + beta;
            }
        }
        const double unbiased = count > 1 ? ss / (count - 1.0) : var;
        running_mean[ch] = static_cast<Real>(p.momentum * running_mean[ch] + (1.0 - p.momentum) * mean);
        running_var[ch] = static_cast<Real>(p.momentum * running_var[ch] + (1.0 - p.momentum) * unbiased);
    });
}

template <typename Real>
void batchnorm_forward_infer(const Tensor3<Real>& x, const BatchNormRef<Real>& p, std::span<const Real> running_mean,
                             std::span<const Real> running_var, Tensor3<Real>& y, unsigned threads) {
    const std::size_t c = x.channels;
    if (p.scale.size() != c || p.shift.size() != c || running_mean.size() != c || running_var.size() != c)
        throw DomainError("batchnorm: parameter shapes inconsistent");
    y.resize(x.batch, c, x.length);
    parallel_for(c, threads, [&](std::size_t ch) {
        const double inv_std = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + p.epsilon);
        const Real a = static_cast<Real>(p.scale[ch] * inv_std);
        const Real bias = static_cast<Real>(p.shift[ch] - p.scale[ch] * running_mean[ch] * inv_std);
        for (std::size_t b = 0; b < x.batch; ++b) {
            const Real* xr = x.row(b, ch);
            Real* yr = y.row(b, ch);
            for (std::size_t t = 0; t < x.length; ++t) yr[t] = a * xr[t] + bias;
        }
    });
}

template <typename Real>
void batchnorm_backward(const Tensor3<Real>& dy, const BatchNormRef<Real>& p, const BatchNormCache<Real>& cache,
                        Tensor3<Real>& dx, std::span<Real> dscale, std::span<Real> dshift, unsigned threads) {
    const Tensor3<Real>& xhat = cache.xhat;
    if (dy.batch != xhat.batch || dy.channels != xhat.channels || dy.length != xhat.length)
        throw DomainError("batchnorm backward: upstream gradient shape mismatch");
    dx.resize(dy.batch, dy.channels, dy.length);
    const double count = static_cast<double>(dy.batch * dy.length);
    parallel_for(dy.channels, threads, [&](std::size_t ch) {
        double sdy = 0.0;
        double sdyx = 0.0;
        for (std::size_t b = 0; b < dy.batch; ++b) {
            sdy += sum(dy.row(b, ch), dy.length);
            sdyx += dot(dy.row(b, ch), xhat.row(b, ch), dy.length);
        }
        dshift[ch] = static_cast<Real>(sdy);
        dscale[ch] = static_cast<Real>(sdyx);
        const double k = static_cast<double>(p.scale[ch]) * cache.inv_std[ch];
        const double mean_dy = sdy / count;
        const double mean_dyx = sdyx / count;
        for (std::size_t b = 0; b < dy.batch; ++b) {
            const Real* dyr = dy.row(b, ch);
            const Real* hr = xhat.row(b, ch);
            Real* dxr = dx.row(b, ch);
            for (std::size_t t = 0; t < dy.length; ++t)
                dxr[t] = static_cast<Real>(k * (static_cast<double>(dyr[t]) - mean_dy -
                                                static_cast<double>(hr[t]) * mean_dyx));
        }
    });
}

template <typename Real>
void relu_forward(const Tensor3<Real>& x, Tensor3<Real>& y) {
    y.resize(x.batch, x.channels, x.length);
    for (std::size_t k = 0; k < x.size(); ++k) y.data[k] = x.data[k] > Real(0) ? x.data[k] : Real(0);
}

template <typename Real>
void relu_backward(const Tensor3<Real>& x, const Tensor3<Real>& dy, Tensor3<Real>& dx) {
    if (dy.size() != x.size()) throw DomainError("relu backward: shape mismatch");
    dx.resize(x.batch, x.channels, x.length);
    for (std::size_t k = 0; k < x.size(); ++k) dx.data[k] = x.data[k] > Real(0) ? dy.data[k] : Real(0);
}

template <typename Real>
Matrix<Real> global_average_pool(const Tensor3<Real>& x) {
    if (x.length < 1) throw DomainError("global_average_pool: empty time axis");
    Matrix<Real> out(x.batch, x.channels);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t c = 0; c < x.channels; ++c)
            out(b, c) = static_cast<Real>(sum(x.row(b, c), x.length) / static_cast<double>(x.length));
    return out;
}

template <typename Real>
void global_average_pool_backward(const Matrix<Real>& dfeatures, std::size_t length, Tensor3<Real>& dx) {
    dx.resize(dfeatures.rows, dfeatures.cols, length);
    for (std::size_t b = 0; b < dfeatures.rows; ++b)
        for (std::size_t c = 0; c < dfeatures.cols; ++c) {
            const Real g = static_cast<Real>(static_cast<double>(dfeatures(b, c)) / static_cast<double>(length));
            std::fill(dx.row(b, c), dx.row(b, c) + length, g);
        }
}

template <typename Real>
Matrix<Real> head_scores(const Matrix<Real>& features, std::span<const Real> theta, std::span<const Real> bias,
                         std::size_t classes) {
    if (theta.size() != features.cols * classes || bias.size() != classes)
        throw DomainError("head: feature width " + std::to_string(features.cols) + " does not match theta");
    Matrix<Real> s(features.rows, classes);
    for (std::size_t b = 0; b < features.rows; ++b)
        for (std::size_t g = 0; g < classes; ++g) {
            double acc = bias[g];
            for (std::size_t f = 0; f < features.cols; ++f)
                acc += static_cast<double>(features(b, f)) * theta[f * classes + g];
            s(b, g) = static_cast<Real>(acc);
        }
    return s;
}

template <typename Real>
Matrix<Real> softmax(const Matrix<Real>& scores) {
    Matrix<Real> p(scores.rows, scores.cols);
    for (std::size_t b = 0; b < scores.rows; ++b) {
        const Real* s = scores.row(b);
        const double mx = *std::max_element(s, s + scores.cols);
        double z = 0.0;
        for (std::size_t g = 0; g < scores.cols; ++g) z += std::exp(static_cast<double>(s[g]) - mx);
        for (std::size_t g = 0; g < scores.cols; ++g)
            p(b, g) = static_cast<Real>(std::exp(static_cast<double>(s[g]) - mx) / z);
    }
    return p;
}

template <typename Real>
void head_backward(const Matrix<Real>& features, std::span<const Real> theta, const Matrix<Real>& dscores,
                   std::span<Real> dtheta, std::span<Real> dbias, Matrix<Real>& dfeatures) {
    const std::size_t classes = dscores.cols;
    if (dscores.rows != features.rows || dtheta.size() != theta.size() || dbias.size() != classes ||
        theta.size() != features.cols * classes)
        throw DomainError("head backward: shape mismatch");
    for (std::size_t g = 0; g < classes; ++g) {
        double acc = 0.0;
        for (std::size_t b = 0; b < features.rows; ++b) acc += dscores(b, g);
        dbias[g] = static_cast<Real>(acc);
    }
    for (std::size_t f = 0; f < features.cols; ++f)
        for (std::size_t g = 0; g < classes; ++g) {
            double acc = 0.0;
            for (std::size_t b = 0; b < features.rows; ++b)
                acc += static_cast<double>(features(b, f)) * dscores(b, g);
            dtheta[f * classes + g] = static_cast<Real>(acc);
        }
    dfeatures = Matrix<Real>(features.rows, features.cols);
    for (std::size_t b = 0; b < features.rows; ++b)
        for (std::size_t f = 0; f < features.cols; ++f) {
            double acc = 0.0;
            for (std::size_t g = 0; g < classes; ++g) acc += static_cast<double>(theta[f * classes + g]) * dscores(b, g);
            dfeatures(b, f) = static_cast<Real>(acc);
        }
}

template <typename Real>
CrossEntropy<Real> cross_entropy(const Matrix<Real>& probs, std::span<const int> labels) {
    if (labels.size() != probs.rows) throw DomainError("cross_entropy: label count does not match batch");
    if (probs.rows == 0) throw DomainError("cross_entropy: empty batch");
    CrossEntropy<Real> out;
    out.dscores = Matrix<Real>(probs.rows, probs.cols);
    const double inv_b = 1.0 / static_cast<double>(probs.rows);
    double total = 0.0;
    for (std::size_t b = 0; b < probs.rows; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols)
            throw DomainError("cross_entropy: label " + std::to_string(y) + " out of range");
        double pt = probs(b, static_cast<std::size_t>(y));
        if (pt < kLogClamp) {
            pt = kLogClamp;
            ++out.clamped;
        }
        total -= std::log(pt);
        for (std::size_t g = 0; g < probs.cols; ++g) {
            const double onehot = static_cast<std::size_t>(y) == g ? 1.0 : 0.0;
            out.dscores(b, g) = static_cast<Real>((static_cast<double>(probs(b, g)) - onehot) * inv_b);
        }
    }
    out.loss = total * inv_b;
    return out;
}

template <typename Real>
void require_finite(std::span<const Real> values, const char* what) {
    for (const Real v : values)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

#define SHMFCN_INSTANTIATE(Real)                                                                                      \
    template void conv1d_forward<Real>(const Tensor3<Real>&, const ConvRef<Real>&, Tensor3<Real>&, unsigned);         \
    template void conv1d_backward<Real>(const Tensor3<Real>&, const ConvRef<Real>&, const Tensor3<Real>&,            \
                                        Tensor3<Real>*, ConvGrad<Real>, unsigned);                                   \
    template void batchnorm_forward_train<Real>(const Tensor3<Real>&, const BatchNormRef<Real>&, std::span<Real>,     \
                                                std::span<Real>, Tensor3<Real>&, BatchNormCache<Real>&, unsigned);    \
    template void batchnorm_forward_infer<Real>(const Tensor3<Real>&, const BatchNormRef<Real>&,                     \
                                                std::span<const Real>, std::span<const Real>, Tensor3<Real>&,         \
                                                unsigned);                                                            \
    template void batchnorm_backward<Real>(const Tensor3<Real>&, const BatchNormRef<Real>&,                          \
                                           const BatchNormCache<Real>&, Tensor3<Real>&, std::span<Real>,             \
                                           std::span<Real>, unsigned);                                                \
    template void relu_forward<Real>(const Tensor3<Real>&, Tensor3<Real>&);                                           \
    template void relu_backward<Real>(const Tensor3<Real>&, const Tensor3<Real>&, Tensor3<Real>&);                    \
    template Matrix<Real> global_average_pool<Real>(const Tensor3<Real>&);                                           \
    template void global_average_pool_backward<Real>(const Matrix<Real>&, std::size_t, Tensor3<Real>&);              \
    template Matrix<Real> head_scores<Real>(const Matrix<Real>&, std::span<const Real>, std::span<const Real>,        \
                                            std::size_t);                                                             \
    template Matrix<Real> softmax<Real>(const Matrix<Real>&);                                                         \
    template void head_backward<Real>(const Matrix<Real>&, std::span<const Real>, const Matrix<Real>&,               \
                                      std::span<Real>, std::span<Real>, Matrix<Real>&);                              \
    template CrossEntropy<Real> cross_entropy<Real>(const Matrix<Real>&, std::span<const int>);                      \
    template void require_finite<Real>(std::span<const Real>, const char*);

SHMFCN_INSTANTIATE(float)
SHMFCN_INSTANTIATE(double)

#undef SHMFCN_INSTANTIATE

}  // namespace shmfcn::nn
