#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shmfcn/nn_layers.hpp"
#include "shmfcn/structural_model.hpp"

namespace shmfcn::nn {

/// One input branch: which sensor block feeds it and which floors (1-based).
struct BranchSpec {
    Direction source = Direction::Shear;
    std::vector<int> sensors{1, 2, 3, 4, 5, 6, 7, 8};
    int length = 667;

    std::size_t channels() const { return sensors.size(); }
};

inline constexpr std::size_t kLayers = 3;

struct NetworkConfig {
    std::vector<BranchSpec> branches{BranchSpec{}};
    std::array<int, kLayers> kernels{8, 5, 3};
    int filters = 16;  // N; layers use N, 2N, N maps
    int classes = 9;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.9;

    void validate() const;
    std::array<std::size_t, kLayers> filter_counts() const;
    /// Time length entering the pooling of branch `b`.
    std::size_t final_length(std::size_t b) const;
    std::size_t feature_width() const;
};

struct Slice {
    std::size_t offset = 0;
    std::size_t size = 0;
};

struct LayerLayout {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    Slice weights, bias, scale, shift;  // trainable vector
    Slice running_mean, running_var;    // buffer vector
};

struct BranchLayout {
    Slice input_mean, input_scale;  // buffer vector; x_std = (x - mean) * scale
    std::array<LayerLayout, kLayers> layers;
};

/// Offsets into the flat trainable and buffer vectors. Trainable order:
/// per branch, per layer [conv weights (out,in,k), conv bias, bn scale, bn shift],
/// then head theta (features, classes) and head bias. Buffer order: per branch
/// [input mean, input scale, per layer running mean, running var].
struct ParamLayout {
    std::vector<BranchLayout> branches;
    Slice theta, head_bias;
    std::size_t features = 0;
    std::size_t classes = 0;
    std::size_t n_weights = 0;
    std::size_t n_buffers = 0;

    static ParamLayout build(const NetworkConfig& cfg);
};

template <typename Real>
struct NetworkParams {
    NetworkConfig config;
    ParamLayout layout;
    std::vector<Real> weights;
    std::vector<Real> buffers;
    std::uint64_t version = 0;  // bumped whenever weights change

    std::span<Real> view(Slice s) { return {weights.data() + s.offset, s.size}; }
    std::span<const Real> view(Slice s) const { return {weights.data() + s.offset, s.size}; }
    std::span<Real> buffer(Slice s) { return {buffers.data() + s.offset, s.size}; }
    std::span<const Real> buffer(Slice s) const { return {buffers.data() + s.offset, s.size}; }

    template <typename Other>
    NetworkParams<Other> cast() const {
        NetworkParams<Other> out;
        out.config = config;
        out.layout = layout;
        out.weights.assign(weights.begin(), weights.end());
        out.buffers.assign(buffers.begin(), buffers.end());
        return out;
    }
};

/// He-uniform conv weights, Glorot-uniform head, zero biases, BN (1, 0),
/// running stats (0, 1), identity input standardization.
template <typename Real>
NetworkParams<Real> init_params(const NetworkConfig& cfg, std::uint64_t seed);

template <typename Real>
struct LayerCache {
    Tensor3<Real> input;   // conv input
    Tensor3<Real> bn_out;  // relu input
    BatchNormCache<Real> bn;
};

template <typename Real>
struct BranchCache {
    std::array<LayerCache<Real>, kLayers> layers;
    std::size_t final_length = 0;
};

/// Activations of one training-mode forward pass. Valid for exactly one
/// backward call with the same parameter version.
template <typename Real>
struct ForwardCache {
    std::vector<BranchCache<Real>> branches;
    Matrix<Real> features;
    Matrix<Real> probs;
    std::uint64_t version = 0;
    bool valid = false;
};

/// Probabilities (batch, classes). Train mode uses batch statistics, updates
/// the running stats and fills `cache`; infer mode uses running stats.
template <typename Real>
Matrix<Real> model_forward(NetworkParams<Real>& params, std::span<const Tensor3<Real>> inputs, Mode mode,
                           ForwardCache<Real>* cache, unsigned threads = 1);

/// Inference-only forward pass; leaves params untouched.
template <typename Real>
Matrix<Real> model_infer(const NetworkParams<Real>& params, std::span<const Tensor3<Real>> inputs,
                         unsigned threads = 1);

/// Backpropagates d(loss)/d(scores) into `grad` (size n_weights, overwritten).
/// `input_grads`, when given, receives the gradient w.r.t. the raw inputs.
template <typename Real>
void model_backward_scores(const NetworkParams<Real>& params, ForwardCache<Real>& cache, const Matrix<Real>& dscores,
                           std::vector<Real>& grad, std::vector<Tensor3<Real>>* input_grads = nullptr,
                           unsigned threads = 1);

/// Cross-entropy loss of the cached forward pass and its full gradient.
template <typename Real>
CrossEntropy<Real> model_backward(const NetworkParams<Real>& params, ForwardCache<Real>& cache,
                                  std::span<const int> labels, std::vector<Real>& grad,
                                  std::vector<Tensor3<Real>>* input_grads = nullptr, unsigned threads = 1);

}  // namespace shmfcn::nn
