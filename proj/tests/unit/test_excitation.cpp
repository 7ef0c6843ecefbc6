#include <map>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "shmfcn/errors.hpp"
#include "shmfcn/excitation.hpp"

using namespace shmfcn;

namespace {

std::vector<double> row_of(const Eigen::MatrixXd& m, Eigen::Index r) {
    std::vector<double> v(m.cols());
    for (Eigen::Index t = 0; t < m.cols(); ++t) v[t] = m(r, t);
    return v;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::size_t nearest_bin(const PowerSpectrum& p, double f) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < p.frequency.size(); ++k)
        if (std::abs(p.frequency[k] - f) < std::abs(p.frequency[best] - f)) best = k;
    return best;
}

// Average PSD of the first floor over `realizations` independent loads.
PowerSpectrum mean_psd(double f_min, double f_max, int realizations, std::size_t segment, bool hann = false) {
    BandNoiseParams p;
    p.f_min = f_min;
    p.f_max = f_max;
    Rng rng(2024);
    PowerSpectrum acc;
    for (int r = 0; r < realizations; ++r) {
        auto load = generate_band_noise(rng, p, 1);
        auto x = row_of(load.values, 0);
        if (hann)
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] *= 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(x.size() - 1));
        auto psd = compute_psd(x, p.dt, segment);
        if (r == 0) {
            acc = psd;
        } else {
            for (std::size_t k = 0; k < psd.density.size(); ++k) acc.density[k] += psd.density[k];
        }
    }
    for (auto& d : acc.density) d /= realizations;
    return acc;
}

}  // namespace

TEST_SUITE("excitation") {

TEST_CASE("takerand over a singleton") {
    Rng rng(1);
    const std::vector<double> one{8.0};
    for (int i = 0; i < 100; ++i) CHECK(takerand(rng, one) == 8.0);
    CHECK_THROWS_AS(takerand(rng, std::span<const double>{}), DomainError);
}

TEST_CASE("takerand is uniform over the grid") {
    Rng rng(7);
    std::map<double, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[takerand(rng, kShearFrequencyGrid)];
    REQUIRE(counts.size() == 9);
    double chi2 = 0;
    for (auto& [v, c] : counts) chi2 += (c - n / 9.0) * (c - n / 9.0) / (n / 9.0);
    CHECK(chi2 < 20.09);  // chi-square, 8 dof, 1 %
}

TEST_CASE("frequency multipliers have the documented spread") {
    // E[f^2] = 2 E[grid^2] for shear and 4 E[grid^2] for axial.
    auto mean_sq = [](const auto& grid) {
        double s = 0;
        for (double v : grid) s += v * v;
        return s / grid.size();
    };
    Rng rng(99);
    const int n = 100000;
    double shear = 0, axial = 0;
    for (int i = 0; i < n; ++i) {
        auto ps = sample_sinusoidal_params(rng, Direction::Shear);
        auto pa = sample_sinusoidal_params(rng, Direction::Axial);
        shear += ps.freqs[0] * ps.freqs[0];
        axial += pa.freqs[0] * pa.freqs[0];
        CHECK(ps.scale_kn == kShearLoadScaleKn);
        CHECK(pa.scale_kn == kAxialLoadScaleKn);
    }
    CHECK(shear / n == doctest::Approx(2 * mean_sq(kShearFrequencyGrid)).epsilon(0.025));
    CHECK(axial / n == doctest::Approx(4 * mean_sq(kAxialFrequencyGrid)).epsilon(0.025));
}

TEST_CASE("sinusoidal sampling is reproducible") {
    Rng a(5), b(5);
    auto pa = sample_sinusoidal_params(a, Direction::Shear);
    auto pb = sample_sinusoidal_params(b, Direction::Shear);
    CHECK(pa.freqs == pb.freqs);
    CHECK(pa.gammas == pb.gammas);
}

TEST_CASE("sinusoidal load evaluation") {
    SinusoidalLoadParams p;
    p.freqs = {1.0, 0.0};
    p.gammas = {1.0, 0.0};
    CHECK(evaluate_sinusoidal_load(p, 8, 0.25) == doctest::Approx(1e7).epsilon(1e-12));
    CHECK(evaluate_sinusoidal_load(p, 8, 0.0) == 0.0);

    p.gammas = {0.0, 0.0};
    for (double t : {0.1, 0.37, 2.5}) CHECK(evaluate_sinusoidal_load(p, 5, t) == 0.0);

    p.freqs = {21.1, 69.2};
    p.gammas = {-0.058, -0.199};
    for (double t = 0.013; t < 1.0; t += 0.0917) {
        const double roof = evaluate_sinusoidal_load(p, 8, t);
        for (int i = 1; i <= 8; ++i)
            CHECK(evaluate_sinusoidal_load(p, i, t) == doctest::Approx(kShearFloorProfile[i - 1] * roof).epsilon(1e-14));
        CHECK(evaluate_sinusoidal_load(p, 1, t) / roof == doctest::Approx(0.13).epsilon(1e-14));
    }
    CHECK_THROWS_AS(evaluate_sinusoidal_load(p, 0, 0.1), DomainError);
    CHECK_THROWS_AS(evaluate_sinusoidal_load(p, 9, 0.1), DomainError);
}

TEST_CASE("axial sinusoidal load is equal on every floor") {
    SinusoidalLoadParams p;
    p.direction = Direction::Axial;
    p.scale_kn = kAxialLoadScaleKn;
    p.freqs = {45.0, -80.0};
    p.gammas = {0.3, 1.1};
    auto s = sinusoidal_load_series(p, 8, 1.0 / 667, 100);
    for (Eigen::Index t = 0; t < 100; ++t)
        for (int i = 1; i < 8; ++i) CHECK(s.values(i, t) == s.values(0, t));
}

TEST_CASE("floor factor") {
    for (int i = 1; i <= 8; ++i) CHECK(floor_factor(i, 8) == kShearFloorProfile[i - 1]);
    CHECK(floor_factor(2, 4) == 0.5);
    CHECK_THROWS_AS(floor_factor(5, 4), DomainError);
}

TEST_CASE("low-pass design") {
    const double dt = 1.0 / 667;
    for (auto [lo, hi] : {std::pair{5.0, 7.0}, {15.0, 17.0}}) {
        auto taps = design_lowpass(lo, hi, dt);
        REQUIRE(taps.size() % 2 == 1);
        for (std::size_t i = 0; i < taps.size(); ++i) CHECK(taps[i] == taps[taps.size() - 1 - i]);
        CHECK(fir_gain(taps, 0.0, dt) == doctest::Approx(1.0).epsilon(1e-3));
        for (double f = hi; f <= 333.5; f += 0.25) CHECK(fir_gain(taps, f, dt) <= 0.01);
    }
    CHECK_THROWS_AS(design_lowpass(5, 400, dt), DomainError);
    CHECK_THROWS_AS(design_lowpass(7, 5, dt), DomainError);
}

TEST_CASE("band noise parameter validation") {
    BandNoiseParams p;
    p.f_max = 400;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = BandNoiseParams{};
    p.f_min = 8;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = BandNoiseParams{};
    p.variance_kn2 = -1;
    CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("zero variance gives a zero load") {
    BandNoiseParams p;
    p.variance_kn2 = 0;
    Rng rng(3);
    auto load = generate_band_noise(rng, p, 8);
    CHECK(load.values.rows() == 8);
    CHECK(load.values.cols() == 6671);
    CHECK(load.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("band noise is reproducible and linear") {
    BandNoiseParams p;
    Rng a(17), b(17);
    CHECK(generate_band_noise(a, p, 8).values == generate_band_noise(b, p, 8).values);

    Rng r1(1), r2(2);
    auto w1 = band_noise_white(r1, p, 3);
    auto w2 = band_noise_white(r2, p, 3);
    auto sum = band_limit(w1 + w2, p, Direction::Shear).values;
    auto parts = (band_limit(w1, p, Direction::Shear).values + band_limit(w2, p, Direction::Shear).values).eval();
    CHECK((sum - parts).cwiseAbs().maxCoeff() <= 1e-9 * parts.cwiseAbs().maxCoeff());
}

TEST_CASE("white sequences of different floors are uncorrelated") {
    BandNoiseParams p;
    p.n_steps = 10000;
    Rng rng(8);
    auto w = band_noise_white(rng, p, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = i + 1; j < 8; ++j) CHECK(std::abs(correlation(row_of(w, i), row_of(w, j))) < 0.05);
}

TEST_CASE("band-limited floor loads are uncorrelated on average") {
    BandNoiseParams p;
    p.f_min = 15;
    p.f_max = 17;
    p.n_steps = 10000;
    Rng rng(9);
    double mean = 0;
    const int trials = 100;
    for (int r = 0; r < trials; ++r) {
        auto load = generate_band_noise(rng, p, 2);
        mean += correlation(row_of(load.values, 0), row_of(load.values, 1));
    }
    CHECK(std::abs(mean / trials) < 0.05);
}

TEST_CASE("5-7 Hz band rejects 10 Hz by 40 dB") {
    // rectangular-window leakage alone sits near -30 dB here, so taper first
    auto psd = mean_psd(5, 7, 100, 0, true);
    const double at3 = psd.density[nearest_bin(psd, 3.0)];
    const double at10 = psd.density[nearest_bin(psd, 10.0)];
    CHECK(10 * std::log10(at3 / at10) >= 40.0);
}

TEST_CASE("15-17 Hz band is flat within 3 dB up to 14 Hz") {
    auto psd = mean_psd(15, 17, 100, 667);
    double sum = 0;
    int n = 0;
    for (std::size_t k = 0; k < psd.frequency.size(); ++k)
        if (psd.frequency[k] >= 0.5 && psd.frequency[k] <= 14.0) sum += psd.density[k], ++n;
    const double mean = sum / n;
    for (std::size_t k = 0; k < psd.frequency.size(); ++k)
        if (psd.frequency[k] >= 0.5 && psd.frequency[k] <= 14.0) {
            CAPTURE(psd.frequency[k]);
            CHECK(std::abs(10 * std::log10(psd.density[k] / mean)) <= 3.0);
        }
}

TEST_CASE("psd of a sinusoid peaks at its frequency") {
    const double dt = 1.0 / 667, f0 = 12.3;
    std::vector<double> x(6671);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::sin(2 * M_PI * f0 * t * dt);
    auto psd = compute_psd(x, dt);
    const auto peak = std::max_element(psd.density.begin(), psd.density.end()) - psd.density.begin();
    const double df = psd.frequency[1] - psd.frequency[0];
    CHECK(std::abs(psd.frequency[peak] - f0) <= df);
}

TEST_CASE("psd of white noise and of zero") {
    const double dt = 0.01, sigma = 1.7;
    Rng rng(4);
    std::vector<double> x(100 * 512);
    for (auto& v : x) v = randn(rng, sigma);
    auto psd = compute_psd(x, dt, 512);
    double mean = 0;
    for (std::size_t k = 1; k + 1 < psd.density.size(); ++k) mean += psd.density[k];
    mean /= psd.density.size() - 2;
    CHECK(mean == doctest::Approx(2 * sigma * sigma * dt).epsilon(0.1));

    std::vector<double> zero(64, 0.0);
    for (double d : compute_psd(zero, dt).density) CHECK(d == 0.0);
}

TEST_CASE("psd satisfies Parseval") {
    Rng rng(12);
    for (std::size_t n : {1000u, 1001u}) {
        std::vector<double> x(n);
        for (auto& v : x) v = randn(rng) + 0.3;
        double ms = 0;
        for (double v : x) ms += v * v;
        ms /= n;
        auto psd = compute_psd(x, 0.002);
        const double df = psd.frequency[1] - psd.frequency[0];
        CHECK(std::accumulate(psd.density.begin(), psd.density.end(), 0.0) * df == doctest::Approx(ms).epsilon(1e-10));
    }
}

}
