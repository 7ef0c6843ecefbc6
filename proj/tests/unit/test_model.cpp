#include <random>

#include "doctest.h"
#include "shmfcn/errors.hpp"
#include "shmfcn/model.hpp"
#include "test_support.hpp"

using namespace shmfcn;
using namespace shmfcn::nn;
using shmfcn::testing::central_difference;
using shmfcn::testing::relative_error;

namespace {

BranchSpec branch(Direction d, int channels, int length) {
    BranchSpec b;
    b.source = d;
    b.sensors.clear();
    for (int c = 1; c <= channels; ++c) b.sensors.push_back(c);
    b.length = length;
    return b;
}

template <typename Real>
std::vector<Tensor3<Real>> random_inputs(const NetworkConfig& cfg, std::size_t batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<Tensor3<Real>> in;
    for (const auto& b : cfg.branches) {
        Tensor3<Real> t(batch, b.channels(), static_cast<std::size_t>(b.length));
        for (auto& v : t.data) v = static_cast<Real>(g(rng));
        in.push_back(std::move(t));
    }
    return in;
}

// Randomizes every trainable entry and the input standardization so that no
// gradient path is trivially zero.
void perturb(NetworkParams<double>& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    for (auto& w : p.weights) w += g(rng);
    for (const auto& bl : p.layout.branches) {
        for (auto& m : p.buffer(bl.input_mean)) m = g(rng);
        for (auto& s : p.buffer(bl.input_scale)) s = 1.0 + std::abs(g(rng));
    }
}

void gradient_check(const NetworkConfig& cfg, std::uint64_t seed) {
    auto params = init_params<double>(cfg, seed);
    perturb(params, seed + 1);
    auto inputs = random_inputs<double>(cfg, 4, seed + 2);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(i % cfg.classes);

    auto loss = [&] {
        ForwardCache<double> c;
        auto probs = model_forward(params, std::span<const Tensor3<double>>(inputs), Mode::Train, &c);
        std::vector<double> unused;
        return model_backward(params, c, labels, unused).loss;
    };

    ForwardCache<double> cache;
    model_forward(params, std::span<const Tensor3<double>>(inputs), Mode::Train, &cache);
    std::vector<double> grad;
    std::vector<Tensor3<double>> dinputs;
    model_backward(params, cache, labels, grad, &dinputs);
    REQUIRE(grad.size() == params.weights.size());

    double worst = 0;
    std::size_t worst_at = 0;
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        const double num = central_difference(loss, params.weights[i], 1e-4);
        const double e = relative_error(grad[i], num);
        if (e > worst) worst = e, worst_at = i;
    }
    INFO("parameters: worst relative error " << worst << " at " << worst_at);
    CHECK(worst < 1e-5);

    double worst_in = 0;
    for (std::size_t b = 0; b < inputs.size(); ++b)
        for (std::size_t i = 0; i < inputs[b].data.size(); ++i) {
            const double num = central_difference(loss, inputs[b].data[i], 1e-4);
            worst_in = std::max(worst_in, relative_error(dinputs[b].data[i], num));
        }
    INFO("inputs: worst relative error " << worst_in);
    CHECK(worst_in < 1e-5);
}

}  // namespace

TEST_SUITE("nn_core") {

TEST_CASE("network shapes") {
    NetworkConfig one;
    one.branches = {branch(Direction::Shear, 16, 667)};
    one.filters = 16;
    CHECK(one.feature_width() == 16);
    CHECK(one.final_length(0) == 654);
    CHECK(one.filter_counts() == std::array<std::size_t, 3>{16, 32, 16});
    auto params = init_params<float>(one, 1);
    auto probs = model_infer(params, std::span<const Tensor3<float>>(random_inputs<float>(one, 3, 2)));
    CHECK(probs.rows == 3);
    CHECK(probs.cols == 9);

    NetworkConfig two;
    two.branches = {branch(Direction::Shear, 8, 667), branch(Direction::Axial, 8, 667)};
    CHECK(two.feature_width() == 32);
    auto p2 = init_params<float>(two, 1);
    CHECK(p2.layout.features == 32);
    CHECK(p2.layout.theta.size == 32 * 9);
}

TEST_CASE("invalid configurations and inputs") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 2, 13)};
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.branches = {branch(Direction::Shear, 2, 30)};
    cfg.branches.push_back(cfg.branches[0]);
    cfg.branches.push_back(cfg.branches[0]);
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    cfg.branches = {branch(Direction::Shear, 2, 30), branch(Direction::Axial, 1, 20)};
    auto params = init_params<float>(cfg, 0);
    auto inputs = random_inputs<float>(cfg, 2, 0);
    std::vector<Tensor3<float>> only_first{inputs[0]};
    CHECK_THROWS_AS(model_infer(params, std::span<const Tensor3<float>>(only_first)), DomainError);
    inputs[1] = Tensor3<float>(2, 1, 21);
    CHECK_THROWS_AS(model_infer(params, std::span<const Tensor3<float>>(inputs)), DomainError);
    inputs[1] = Tensor3<float>(3, 1, 20);
    CHECK_THROWS_AS(model_infer(params, std::span<const Tensor3<float>>(inputs)), DomainError);
}

TEST_CASE("initialization") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 8, 667), branch(Direction::Axial, 8, 667)};
    cfg.filters = 64;
    auto a = init_params<float>(cfg, 17);
    auto b = init_params<float>(cfg, 17);
    auto c = init_params<float>(cfg, 18);
    CHECK(a.weights == b.weights);
    CHECK(a.buffers == b.buffers);
    CHECK(a.weights != c.weights);

    double sum = 0, n = 0;
    for (const auto& bl : a.layout.branches)
        for (const auto& l : bl.layers) {
            const double bound = std::sqrt(6.0 / (l.in_channels * l.kernel));
            for (float w : a.view(l.weights)) {
                CHECK_MESSAGE(std::abs(w) <= bound, "weight outside the He bound");
                sum += w / bound;
                n += 1;
            }
            for (float v : a.view(l.bias)) CHECK(v == 0.0f);
            for (float v : a.view(l.scale)) CHECK(v == 1.0f);
            for (float v : a.view(l.shift)) CHECK(v == 0.0f);
            for (float v : a.buffer(l.running_mean)) CHECK(v == 0.0f);
            for (float v : a.buffer(l.running_var)) CHECK(v == 1.0f);
        }
    REQUIRE(n >= 1e5);
    // U(-1, 1) has standard deviation 1/sqrt(3).
    CHECK(std::abs(sum / n) < 3.0 / std::sqrt(3.0 * n));

    const double glorot = std::sqrt(6.0 / (a.layout.features + a.layout.classes));
    for (float w : a.view(a.layout.theta)) CHECK(std::abs(w) <= glorot);
    for (float v : a.view(a.layout.head_bias)) CHECK(v == 0.0f);
}

TEST_CASE("identical instances give identical rows") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 3, 40)};
    cfg.filters = 4;
    auto params = init_params<float>(cfg, 3);
    auto in = random_inputs<float>(cfg, 1, 4);
    Tensor3<float> rep(5, 3, 40);
    for (std::size_t b = 0; b < 5; ++b) std::copy(in[0].data.begin(), in[0].data.end(), rep.row(b, 0));
    std::vector<Tensor3<float>> batch{rep};
    for (Mode mode : {Mode::Train, Mode::Infer}) {
        ForwardCache<float> cache;
        auto p = model_forward(params, std::span<const Tensor3<float>>(batch), mode, mode == Mode::Train ? &cache : nullptr);
        for (std::size_t b = 1; b < 5; ++b)
            for (std::size_t g = 0; g < p.cols; ++g) CHECK(p(b, g) == p(0, g));
        for (std::size_t b = 0; b < 5; ++b) {
            double s = 0;
            for (std::size_t g = 0; g < p.cols; ++g) s += p(b, g);
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("one-branch model gradients") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 2, 20)};
    cfg.filters = 3;
    cfg.classes = 3;
    gradient_check(cfg, 100);
}

TEST_CASE("two-branch model gradients") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 2, 20), branch(Direction::Axial, 1, 18)};
    cfg.filters = 3;
    cfg.classes = 3;
    gradient_check(cfg, 200);
}

TEST_CASE("zero upstream gradient") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 2, 20), branch(Direction::Axial, 2, 20)};
    cfg.filters = 3;
    auto params = init_params<double>(cfg, 9);
    auto inputs = random_inputs<double>(cfg, 3, 9);
    ForwardCache<double> cache;
    model_forward(params, std::span<const Tensor3<double>>(inputs), Mode::Train, &cache);
    std::vector<double> grad;
    std::vector<Tensor3<double>> dinputs;
    model_backward_scores(params, cache, Matrix<double>(3, 9), grad, &dinputs);
    for (double g : grad) CHECK(g == 0.0);
    for (const auto& t : dinputs)
        for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("stale or missing caches are rejected") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 2, 20)};
    cfg.filters = 2;
    auto params = init_params<float>(cfg, 1);
    auto inputs = random_inputs<float>(cfg, 2, 1);
    std::vector<int> labels{0, 1};
    std::vector<float> grad;

    ForwardCache<float> never;
    CHECK_THROWS_AS(model_backward(params, never, labels, grad), DomainError);

    ForwardCache<float> cache;
    model_forward(params, std::span<const Tensor3<float>>(inputs), Mode::Train, &cache);
    params.version++;
    CHECK_THROWS_AS(model_backward(params, cache, labels, grad), DomainError);

    model_forward(params, std::span<const Tensor3<float>>(inputs), Mode::Train, &cache);
    model_backward(params, cache, labels, grad);
    CHECK_THROWS_AS(model_backward(params, cache, labels, grad), DomainError);

    model_forward(params, std::span<const Tensor3<float>>(inputs), Mode::Infer, &cache);
    CHECK_THROWS_AS(model_backward(params, cache, labels, grad), DomainError);
}

TEST_CASE("results do not depend on the thread count") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 8, 120), branch(Direction::Axial, 8, 100)};
    cfg.filters = 8;
    auto inputs = random_inputs<float>(cfg, 16, 5);
    std::vector<int> labels;
    for (int i = 0; i < 16; ++i) labels.push_back(i % 9);
    std::vector<std::vector<float>> grads;
    std::vector<double> losses;
    for (unsigned threads : {1u, 1u, 4u}) {
        auto params = init_params<float>(cfg, 5);
        ForwardCache<float> cache;
        model_forward(params, std::span<const Tensor3<float>>(inputs), Mode::Train, &cache, threads);
        std::vector<float> grad;
        losses.push_back(model_backward<float>(params, cache, labels, grad, nullptr, threads).loss);
        grads.push_back(grad);
    }
    CHECK(losses[0] == losses[1]);
    CHECK(grads[0] == grads[1]);
    CHECK(std::abs(losses[0] - losses[2]) <= 1e-6);
    for (std::size_t i = 0; i < grads[0].size(); ++i) CHECK(std::abs(grads[0][i] - grads[2][i]) <= 1e-6);
}

TEST_CASE("float and double paths agree") {
    NetworkConfig cfg;
    cfg.branches = {branch(Direction::Shear, 4, 60)};
    cfg.filters = 4;
    auto pf = init_params<float>(cfg, 8);
    auto pd = pf.cast<double>();
    auto inf = random_inputs<float>(cfg, 4, 8);
    std::vector<Tensor3<double>> ind;
    for (const auto& t : inf) {
        Tensor3<double> d(t.batch, t.channels, t.length);
        d.data.assign(t.data.begin(), t.data.end());
        ind.push_back(d);
    }
    auto a = model_infer(pf, std::span<const Tensor3<float>>(inf));
    auto b = model_infer(pd, std::span<const Tensor3<double>>(ind));
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) < 1e-5);
}

}
