#include "shmfcn/excitation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "fft.hpp"
#include "shmfcn/errors.hpp"

namespace shmfcn {
namespace {

constexpr double kStopbandGain = 0.01;  // -40 dB

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

std::vector<double> windowed_sinc(std::size_t order, double cutoff, double dt) {
    const std::size_t taps = order + 1;
    const double fc = cutoff * dt;  // cycles per sample
    const double centre = 0.5 * static_cast<double>(order);
    std::vector<double> h(taps);
    double sum = 0.0;
    for (std::size_t n = 0; n < taps; ++n) {
        const double window =
            0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(order));
        h[n] = 2.0 * fc * sinc(2.0 * fc * (static_cast<double>(n) - centre)) * window;
        sum += h[n];
    }
    for (double& v : h) v /= sum;
    // Enforce exact symmetry against rounding in the window/sinc evaluation.
    for (std::size_t n = 0; n < taps / 2; ++n) {
        const double avg = 0.5 * (h[n] + h[taps - 1 - n]);
        h[n] = avg;
        h[taps - 1 - n] = avg;
    }
    return h;
}

bool meets_stopband(std::span<const double> h, double f_max, double dt) {
    const double nyquist = 0.5 / dt;
    // Grid finer than the sidelobe spacing 1/(taps*dt).
    const double step = 1.0 / (8.0 * static_cast<double>(h.size()) * dt);
    for (double f = f_max; f <= nyquist; f += step)
        if (fir_gain(h, f, dt) > kStopbandGain) return false;
    return fir_gain(h, nyquist, dt) <= kStopbandGain;
}

}  // namespace

void BandNoiseParams::validate() const {
    if (!(dt > 0.0)) throw DomainError("band noise: dt must be > 0");
    const double nyquist = 0.5 / dt;
    if (!(f_min > 0.0 && f_min < f_max && f_max < nyquist))
        throw DomainError("band noise: require 0 < f_min < f_max < Nyquist (" + std::to_string(nyquist) + " Hz)");
    if (!(variance_kn2 >= 0.0)) throw DomainError("band noise: variance must be >= 0");
    if (n_steps == 0) throw DomainError("band noise: n_steps must be > 0");
}

double takerand(Rng& rng, std::span<const double> values) {
    if (values.empty()) throw DomainError("takerand over an empty set");
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    return values[pick(rng)];
}

SinusoidalLoadParams sample_sinusoidal_params(Rng& rng, Direction direction) {
    SinusoidalLoadParams p;
    p.direction = direction;
    if (direction == Direction::Shear) {
        p.scale_kn = kShearLoadScaleKn;
        for (double& f : p.freqs) f = takerand(rng, kShearFrequencyGrid) * randn(rng, std::numbers::sqrt2);
    } else {
        p.scale_kn = kAxialLoadScaleKn;
        for (double& f : p.freqs) f = takerand(rng, kAxialFrequencyGrid) * (2.0 * randn(rng, 1.0));
    }
    for (double& g : p.gammas) g = randn(rng, 1.0);
    return p;
}

double floor_factor(int floor, int n_stories) {
    if (floor < 1 || floor > n_stories)
        throw DomainError("floor " + std::to_string(floor) + " outside [1, " + std::to_string(n_stories) + "]");
    if (n_stories == static_cast<int>(kShearFloorProfile.size()))
        return kShearFloorProfile[static_cast<std::size_t>(floor - 1)];
    return static_cast<double>(floor) / static_cast<double>(n_stories);
}

double evaluate_sinusoidal_load(const SinusoidalLoadParams& params, int floor, double t, int n_stories) {
    const double profile = floor_factor(floor, n_stories);
    double sum = 0.0;
    for (std::size_t j = 0; j < 2; ++j)
        sum += params.gammas[j] * std::sin(2.0 * std::numbers::pi * params.freqs[j] * t);
    const double factor = params.direction == Direction::Shear ? profile : 1.0;
    return params.scale_kn * 1e3 * factor * sum;
}

LoadSeries sinusoidal_load_series(const SinusoidalLoadParams& params, int n_stories, double dt, Eigen::Index n_steps) {
    if (!(dt > 0.0) || n_steps <= 0) throw DomainError("load series requires dt > 0 and n_steps > 0");
    LoadSeries load;
    load.direction = params.direction;
    load.dt = dt;
    load.values.resize(n_stories, n_steps);
    // The time history is common to all floors; only the profile differs.
    Eigen::RowVectorXd history(n_steps);
    for (Eigen::Index k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        double sum = 0.0;
        for (std::size_t j = 0; j < 2; ++j)
            sum += params.gammas[j] * std::sin(2.0 * std::numbers::pi * params.freqs[j] * t);
        history(k) = sum;
    }
    for (int i = 1; i <= n_stories; ++i) {
        const double factor = params.direction == Direction::Shear ? floor_factor(i, n_stories) : 1.0;
        load.values.row(i - 1) = (params.scale_kn * 1e3 * factor) * history;
    }
    return load;
}

double fir_gain(std::span<const double> taps, double f, double dt) {
    double re = 0.0, im = 0.0;
    const double w = 2.0 * std::numbers::pi * f * dt;
    for (std::size_t n = 0; n < taps.size(); ++n) {
        re += taps[n] * std::cos(w * static_cast<double>(n));
        im -= taps[n] * std::sin(w * static_cast<double>(n));
    }
    return std::hypot(re, im);
}

std::vector<double> design_lowpass(double f_min, double f_max, double dt) {
    if (!(dt > 0.0) || !(f_min > 0.0 && f_min < f_max && f_max < 0.5 / dt))
        throw DomainError("design_lowpass requires 0 < f_min < f_max < 1/(2 dt)");

    static std::mutex cache_mutex;
    static std::map<std::tuple<double, double, double>, std::vector<double>> cache;
    const auto key = std::make_tuple(f_min, f_max, dt);
    {
        std::lock_guard lock(cache_mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }

    const double cutoff = 0.5 * (f_min + f_max);
    auto passes = [&](std::size_t order) { return meets_stopband(windowed_sinc(order, cutoff, dt), f_max, dt); };

    // Bracket, then bisect on even orders; finally scan a few orders below in
    // case the attenuation is not monotone in the order.
    std::size_t hi = 2;
    while (!passes(hi)) {
        hi *= 2;
        if (hi > (1u << 22)) throw NumericError("design_lowpass: no order reaches the stopband attenuation");
    }
    std::size_t lo = hi / 2;  // fails (or is 1)
    while (hi - lo > 2) {
        std::size_t mid = (lo + hi) / 2;
        mid -= mid % 2;
        if (mid <= lo) mid = lo + 2;
        if (mid >= hi) break;
        if (passes(mid)) hi = mid;
        else lo = mid;
    }
    std::size_t best = hi;
    for (std::size_t o = hi; o >= 4 && o + 16 > hi; o -= 2)
        if (passes(o - 2)) best = o - 2;

    auto taps = windowed_sinc(best, cutoff, dt);
    std::lock_guard lock(cache_mutex);
    cache.emplace(key, taps);
    return taps;
}

std::vector<double> filter_zero_phase(std::span<const double> x, std::span<const double> taps) {
    if (x.empty()) return {};
    if (taps.empty()) throw DomainError("filter_zero_phase: empty filter");
    auto forward = detail::fft_convolve(x, taps);
    std::reverse(forward.begin(), forward.end());
    auto backward = detail::fft_convolve(forward, taps);
    std::reverse(backward.begin(), backward.end());
    // Both passes together delay by (taps - 1) samples before the reversal cancels it.
    const std::size_t offset = taps.size() - 1;
    return {backward.begin() + static_cast<std::ptrdiff_t>(offset),
            backward.begin() + static_cast<std::ptrdiff_t>(offset + x.size())};
}

std::size_t band_noise_margin(const BandNoiseParams& params) {
    return design_lowpass(params.f_min, params.f_max, params.dt).size();
}

Eigen::MatrixXd band_noise_white(Rng& rng, const BandNoiseParams& params, int n_stories) {
    params.validate();
    if (n_stories < 1) throw DomainError("band noise: n_stories must be >= 1");
    const std::size_t margin = band_noise_margin(params);
    const auto total = static_cast<Eigen::Index>(params.n_steps + 2 * margin);
    Eigen::MatrixXd white(n_stories, total);
    const double sigma = std::sqrt(params.variance_kn2);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < n_stories; ++i)
        for (Eigen::Index k = 0; k < total; ++k) white(i, k) = sigma * dist(rng);
    return white;
}

LoadSeries band_limit(const Eigen::MatrixXd& white_kn, const BandNoiseParams& params, Direction direction) {
    params.validate();
    const auto taps = design_lowpass(params.f_min, params.f_max, params.dt);
    const std::size_t margin = taps.size();
    if (static_cast<std::size_t>(white_kn.cols()) != params.n_steps + 2 * margin)
        throw DomainError("band_limit: white sequence length does not match params and filter margin");

    LoadSeries load;
    load.direction = direction;
    load.dt = params.dt;
    load.values.resize(white_kn.rows(), static_cast<Eigen::Index>(params.n_steps));
    std::vector<double> row(static_cast<std::size_t>(white_kn.cols()));
    for (Eigen::Index i = 0; i < white_kn.rows(); ++i) {
        for (Eigen::Index k = 0; k < white_kn.cols(); ++k) row[static_cast<std::size_t>(k)] = white_kn(i, k);
        const auto filtered = filter_zero_phase(row, taps);
        for (std::size_t k = 0; k < params.n_steps; ++k)
            load.values(i, static_cast<Eigen::Index>(k)) = filtered[k + margin] * 1e3;
    }
    return load;
}

LoadSeries generate_band_noise(Rng& rng, const BandNoiseParams& params, int n_stories, Direction direction) {
    return band_limit(band_noise_white(rng, params, n_stories), params, direction);
}

PowerSpectrum compute_psd(std::span<const double> series, double dt, std::size_t segment_length) {
    if (series.size() < 2) throw DomainError("compute_psd requires at least two samples");
    if (!(dt > 0.0)) throw DomainError("compute_psd requires dt > 0");
    const std::size_t n = segment_length == 0 ? series.size() : segment_length;
    if (n < 2 || n > series.size()) throw DomainError("compute_psd: segment length must lie in [2, series length]");
    const std::size_t segments = series.size() / n;

    PowerSpectrum psd;
    const std::size_t bins = n / 2 + 1;
    psd.frequency.resize(bins);
    psd.density.assign(bins, 0.0);
    for (std::size_t k = 0; k < bins; ++k) psd.frequency[k] = static_cast<double>(k) / (static_cast<double>(n) * dt);

    for (std::size_t s = 0; s < segments; ++s) {
        const auto spectrum = detail::rfft(series.subspan(s * n, n));
        for (std::size_t k = 0; k < bins; ++k) {
            const bool unpaired = (k == 0) || (n % 2 == 0 && k == n / 2);
            psd.density[k] += (unpaired ? 1.0 : 2.0) * std::norm(spectrum[k]) * dt / static_cast<double>(n);
        }
    }
    for (double& v : psd.density) v /= static_cast<double>(segments);
    return psd;
}

}  // namespace shmfcn
