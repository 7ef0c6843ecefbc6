#include "shmfcn/model.hpp"

#include <cmath>
#include <random>
#include <set>
#include <string>

#include "shmfcn/errors.hpp"
#include "shmfcn/rng.hpp"

namespace shmfcn::nn {

void NetworkConfig::validate() const {
    if (branches.empty() || branches.size() > 2) throw DomainError("network needs 1 or 2 branches");
    if (filters < 1) throw DomainError("filters must be >= 1");
    if (classes < 2) throw DomainError("classes must be >= 2");
    for (int k : kernels)
        if (k < 1) throw DomainError("kernel sizes must be >= 1");
    if (!(bn_epsilon > 0.0)) throw DomainError("bn_epsilon must be > 0");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw DomainError("bn_momentum must be in [0, 1)");
    for (std::size_t b = 0; b < branches.size(); ++b) {
        const BranchSpec& br = branches[b];
        if (br.sensors.empty()) throw DomainError("branch " + std::to_string(b + 1) + " has no sensors");
        std::set<int> seen;
        for (int s : br.sensors)
            if (s < 1 || !seen.insert(s).second)
                throw DomainError("branch " + std::to_string(b + 1) + ": sensor indices must be unique and >= 1");
        long len = br.length;
        for (int k : kernels) len -= k - 1;
        if (len <= 0)
            throw DomainError("branch " + std::to_string(b + 1) + ": input length " + std::to_string(br.length) +
                              " too short for the kernels");
    }
}

std::array<std::size_t, kLayers> NetworkConfig::filter_counts() const {
    const auto n = static_cast<std::size_t>(filters);
    return {n, 2 * n, n};
}

std::size_t NetworkConfig::final_length(std::size_t b) const {
    long len = branches.at(b).length;
    for (int k : kernels) len -= k - 1;
    return static_cast<std::size_t>(len);
}

std::size_t NetworkConfig::feature_width() const { return branches.size() * filter_counts()[kLayers - 1]; }

ParamLayout ParamLayout::build(const NetworkConfig& cfg) {
    cfg.validate();
    ParamLayout out;
    std::size_t w = 0;
    std::size_t buf = 0;
    auto take = [](std::size_t& cursor, std::size_t n) {
        Slice s{cursor, n};
        cursor += n;
        return s;
    };
    const auto filters = cfg.filter_counts();
    for (const BranchSpec& br : cfg.branches) {
        BranchLayout bl;
        bl.input_mean = take(buf, br.channels());
        bl.input_scale = take(buf, br.channels());
        std::size_t in = br.channels();
        for (std::size_t l = 0; l < kLayers; ++l) {
            LayerLayout& ll = bl.layers[l];
            ll.in_channels = in;
            ll.out_channels = filters[l];
            ll.kernel = static_cast<std::size_t>(cfg.kernels[l]);
            ll.weights = take(w, ll.out_channels * ll.in_channels * ll.kernel);
            ll.bias = take(w, ll.out_channels);
            ll.scale = take(w, ll.out_channels);
            ll.shift = take(w, ll.out_channels);
            ll.running_mean = take(buf, ll.out_channels);
            ll.running_var = take(buf, ll.out_channels);
            in = ll.out_channels;
        }
        out.branches.push_back(bl);
    }
    out.features = cfg.feature_width();
    out.classes = static_cast<std::size_t>(cfg.classes);
    out.theta = take(w, out.features * out.classes);
    out.head_bias = take(w, out.classes);
    out.n_weights = w;
    out.n_buffers = buf;
    return out;
}

template <typename Real>
NetworkParams<Real> init_params(const NetworkConfig& cfg, std::uint64_t seed) {
    NetworkParams<Real> p;
    p.config = cfg;
    p.layout = ParamLayout::build(cfg);
    p.weights.assign(p.layout.n_weights, Real(0));
    p.buffers.assign(p.layout.n_buffers, Real(0));
    Rng rng(seed);
    auto fill_uniform = [&](std::span<Real> dst, double bound) {
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Real& v : dst) v = static_cast<Real>(u(rng));
    };
    for (const BranchLayout& bl : p.layout.branches) {
        for (Real& v : p.buffer(bl.input_scale)) v = Real(1);
        for (const LayerLayout& ll : bl.layers) {
            fill_uniform(p.view(ll.weights), std::sqrt(6.0 / static_cast<double>(ll.in_channels * ll.kernel)));
            for (Real& v : p.view(ll.scale)) v = Real(1);
            for (Real& v : p.buffer(ll.running_var)) v = Real(1);
        }
    }
    fill_uniform(p.view(p.layout.theta),
                 std::sqrt(6.0 / static_cast<double>(p.layout.features + p.layout.classes)));
    return p;
}

namespace {

template <typename Real>
std::size_t check_inputs(const NetworkConfig& cfg, std::span<const Tensor3<Real>> inputs) {
    if (inputs.size() != cfg.branches.size())
        throw DomainError("model expects " + std::to_string(cfg.branches.size()) + " input blocks, got " +
                          std::to_string(inputs.size()));
    const std::size_t batch = inputs.front().batch;
    if (batch == 0) throw DomainError("empty batch");
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        const BranchSpec& br = cfg.branches[b];
        const Tensor3<Real>& x = inputs[b];
        if (x.batch != batch) throw DomainError("branch inputs disagree on batch size");
        if (x.channels != br.channels() || x.length != static_cast<std::size_t>(br.length))
            throw DomainError("branch " + std::to_string(b + 1) + " expects " + std::to_string(br.channels()) + "x" +
                              std::to_string(br.length) + " input, got " + std::to_string(x.channels) + "x" +
                              std::to_string(x.length));
    }
    return batch;
}

template <typename Real>
Tensor3<Real> standardize(const Tensor3<Real>& x, std::span<const Real> mean, std::span<const Real> scale) {
    Tensor3<Real> out(x.batch, x.channels, x.length);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t c = 0; c < x.channels; ++c) {
            const Real* xr = x.row(b, c);
            Real* o = out.row(b, c);
            for (std::size_t t = 0; t < x.length; ++t) o[t] = (xr[t] - mean[c]) * scale[c];
        }
    return out;
}

template <typename Real>
ConvRef<Real> conv_ref(const NetworkParams<Real>& p, const LayerLayout& ll) {
    return {p.view(ll.weights), p.view(ll.bias), ll.out_channels, ll.in_channels, ll.kernel};
}

template <typename Real>
BatchNormRef<Real> bn_ref(const NetworkParams<Real>& p, const LayerLayout& ll) {
    return {p.view(ll.scale), p.view(ll.shift), p.config.bn_epsilon, p.config.bn_momentum};
}

// Shared forward body. `train_params` is non-null in train mode.
template <typename Real>
Matrix<Real> forward_impl(const NetworkParams<Real>& params, NetworkParams<Real>* train_params,
                          std::span<const Tensor3<Real>> inputs, ForwardCache<Real>* cache, unsigned threads) {
    const NetworkConfig& cfg = params.config;
    const std::size_t batch = check_inputs(cfg, inputs);
    const bool train = train_params != nullptr;
    if (train) {
        cache->branches.assign(cfg.branches.size(), BranchCache<Real>{});
        cache->valid = false;
    }
    Matrix<Real> features(batch, params.layout.features);
    std::size_t col = 0;
    for (std::size_t b = 0; b < cfg.branches.size(); ++b) {
        const BranchLayout& bl = params.layout.branches[b];
        Tensor3<Real> cur = standardize(inputs[b], params.buffer(bl.input_mean), params.buffer(bl.input_scale));
        for (std::size_t l = 0; l < kLayers; ++l) {
            const LayerLayout& ll = bl.layers[l];
            Tensor3<Real> z;
            conv1d_forward(cur, conv_ref(params, ll), z, threads);
            Tensor3<Real> a;
            if (train) {
                LayerCache<Real>& lc = cache->branches[b].layers[l];
                batchnorm_forward_train(z, bn_ref(params, ll), train_params->buffer(ll.running_mean),
                                        train_params->buffer(ll.running_var), a, lc.bn, threads);
            } else {
                batchnorm_forward_infer(z, bn_ref(params, ll), params.buffer(ll.running_mean),
                                        params.buffer(ll.running_var), a, threads);
            }
            require_finite<Real>(a.data, "batch-normalized conv output");
            Tensor3<Real> r;
            relu_forward(a, r);
            if (train) {
                LayerCache<Real>& lc = cache->branches[b].layers[l];
                lc.input = std::move(cur);
                lc.bn_out = std::move(a);
            }
            cur = std::move(r);
        }
        const Matrix<Real> pooled = global_average_pool(cur);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t c = 0; c < pooled.cols; ++c) features(i, col + c) = pooled(i, c);
        col += pooled.cols;
        if (train) cache->branches[b].final_length = cur.length;
    }
    const Matrix<Real> scores =
        head_scores(features, params.view(params.layout.theta), params.view(params.layout.head_bias),
                    params.layout.classes);
    Matrix<Real> probs = softmax(scores);
    require_finite<Real>(probs.data, "softmax output");
    if (train) {
        cache->features = std::move(features);
        cache->probs = probs;
        cache->version = params.version;
        cache->valid = true;
    }
    return probs;
}

}  // namespace

template <typename Real>
Matrix<Real> model_forward(NetworkParams<Real>& params, std::span<const Tensor3<Real>> inputs, Mode mode,
                           ForwardCache<Real>* cache, unsigned threads) {
    if (mode == Mode::Infer) return forward_impl<Real>(params, nullptr, inputs, nullptr, threads);
    if (!cache) throw DomainError("train-mode forward needs a cache");
    return forward_impl<Real>(params, &params, inputs, cache, threads);
}

template <typename Real>
Matrix<Real> model_infer(const NetworkParams<Real>& params, std::span<const Tensor3<Real>> inputs, unsigned threads) {
    return forward_impl<Real>(params, nullptr, inputs, nullptr, threads);
}

template <typename Real>
void model_backward_scores(const NetworkParams<Real>& params, ForwardCache<Real>& cache, const Matrix<Real>& dscores,
                           std::vector<Real>& grad, std::vector<Tensor3<Real>>* input_grads, unsigned threads) {
    if (!cache.valid) throw DomainError("model_backward: no train-mode forward pass cached");
    if (cache.version != params.version)
        throw DomainError("model_backward: cache is stale (parameters changed since forward)");
    if (dscores.rows != cache.features.rows || dscores.cols != params.layout.classes)
        throw DomainError("model_backward: score gradient shape mismatch");
    cache.valid = false;
    const NetworkParams<Real>& p = params;
    const ParamLayout& lay = p.layout;
    grad.assign(lay.n_weights, Real(0));
    auto gview = [&](Slice s) { return std::span<Real>(grad.data() + s.offset, s.size); };

    Matrix<Real> dfeatures;
    head_backward(cache.features, p.view(lay.theta), dscores, gview(lay.theta), gview(lay.head_bias), dfeatures);

    if (input_grads) input_grads->assign(p.config.branches.size(), Tensor3<Real>{});
    const std::size_t batch = dscores.rows;
    std::size_t col = 0;
    for (std::size_t b = 0; b < p.config.branches.size(); ++b) {
        const BranchLayout& bl = lay.branches[b];
        BranchCache<Real>& bc = cache.branches[b];
        const std::size_t width = bl.layers[kLayers - 1].out_channels;
        Matrix<Real> dpool(batch, width);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t c = 0; c < width; ++c) dpool(i, c) = dfeatures(i, col + c);
        col += width;

        Tensor3<Real> dcur;
        global_average_pool_backward(dpool, bc.final_length, dcur);
        for (std::size_t l = kLayers; l-- > 0;) {
            const LayerLayout& ll = bl.layers[l];
            LayerCache<Real>& lc = bc.layers[l];
            Tensor3<Real> da;
            relu_backward(lc.bn_out, dcur, da);
            Tensor3<Real> dz;
            batchnorm_backward(da, bn_ref(p, ll), lc.bn, dz, gview(ll.scale), gview(ll.shift), threads);
            const bool need_dx = l > 0 || input_grads != nullptr;
            Tensor3<Real> dx;
            conv1d_backward(lc.input, conv_ref(p, ll), dz, need_dx ? &dx : nullptr,
                            ConvGrad<Real>{gview(ll.weights), gview(ll.bias)}, threads);
            dcur = std::move(dx);
        }
        if (input_grads) {
            const auto scale = p.buffer(bl.input_scale);
            for (std::size_t i = 0; i < dcur.batch; ++i)
                for (std::size_t c = 0; c < dcur.channels; ++c) {
                    Real* r = dcur.row(i, c);
                    for (std::size_t t = 0; t < dcur.length; ++t) r[t] *= scale[c];
                }
            (*input_grads)[b] = std::move(dcur);
        }
    }
    require_finite<Real>(grad, "parameter gradient");
}

template <typename Real>
CrossEntropy<Real> model_backward(const NetworkParams<Real>& params, ForwardCache<Real>& cache,
                                  std::span<const int> labels, std::vector<Real>& grad,
                                  std::vector<Tensor3<Real>>* input_grads, unsigned threads) {
    if (!cache.valid) throw DomainError("model_backward: no train-mode forward pass cached");
    CrossEntropy<Real> ce = cross_entropy(cache.probs, labels);
    model_backward_scores(params, cache, ce.dscores, grad, input_grads, threads);
    return ce;
}

#define SHMFCN_INSTANTIATE(Real)                                                                                     \
    template NetworkParams<Real> init_params<Real>(const NetworkConfig&, std::uint64_t);                           \
    template Matrix<Real> model_forward<Real>(NetworkParams<Real>&, std::span<const Tensor3<Real>>, Mode,          \
                                              ForwardCache<Real>*, unsigned);                                       \
    template Matrix<Real> model_infer<Real>(const NetworkParams<Real>&, std::span<const Tensor3<Real>>, unsigned); \
    template void model_backward_scores<Real>(const NetworkParams<Real>&, ForwardCache<Real>&,                      \
                                              const Matrix<Real>&, std::vector<Real>&,                             \
                                              std::vector<Tensor3<Real>>*, unsigned);                              \
    template CrossEntropy<Real> model_backward<Real>(const NetworkParams<Real>&, ForwardCache<Real>&,               \
                                                     std::span<const int>, std::vector<Real>&,                     \
                                                     std::vector<Tensor3<Real>>*, unsigned);

SHMFCN_INSTANTIATE(float)
SHMFCN_INSTANTIATE(double)

#undef SHMFCN_INSTANTIATE

}  // namespace shmfcn::nn
