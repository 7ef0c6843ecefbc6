#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "shmfcn/rng.hpp"
#include "shmfcn/structural_model.hpp"

namespace shmfcn {

// Random generation grids for the two-sinusoid floor loads (Hz).
inline constexpr std::array<double, 9> kShearFrequencyGrid{1.0, 2.75, 4.5, 6.25, 8.0, 9.75, 11.5, 13.25, 15.0};
inline constexpr std::array<double, 9> kAxialFrequencyGrid{10.0, 27.5, 45.0, 62.5, 80.0, 97.5, 115.0, 132.5, 150.0};
// Lateral load profile over the eight floors (first floor to roof).
inline constexpr std::array<double, 8> kShearFloorProfile{0.13, 0.25, 0.38, 0.50, 0.63, 0.75, 0.88, 1.00};

inline constexpr double kShearLoadScaleKn = 1e4;
inline constexpr double kAxialLoadScaleKn = 1e3;

struct SinusoidalLoadParams {
    Direction direction = Direction::Shear;
    std::array<double, 2> freqs{};   // Hz, sign kept as sampled
    std::array<double, 2> gammas{};  // standard-normal amplitudes
    double scale_kn = kShearLoadScaleKn;
};

struct BandNoiseParams {
    double f_min = 5.0;
    double f_max = 7.0;
    double variance_kn2 = 1e4;
    double dt = 1.0 / 667.0;
    std::size_t n_steps = 6671;

    void validate() const;
};

/// Floor loads in N, one row per floor, one column per time step.
struct LoadSeries {
    Direction direction = Direction::Shear;
    Eigen::MatrixXd values;
    double dt = 0.0;

    Eigen::Index n_steps() const { return values.cols(); }
};

/// Uniform draw from a discrete set.
double takerand(Rng& rng, std::span<const double> values);

/// Draw order per component j: grid value, gaussian multiplier; then the two
/// amplitudes. Shear multiplier ~ N(0, 2), axial multiplier = 2 N(0, 1).
SinusoidalLoadParams sample_sinusoidal_params(Rng& rng, Direction direction);

/// Lateral profile factor for floor i (1-based). Uses the tabulated profile for
/// eight floors and i/n otherwise.
double floor_factor(int floor, int n_stories);

/// Load on `floor` (1-based) at time t, in N.
double evaluate_sinusoidal_load(const SinusoidalLoadParams& params, int floor, double t, int n_stories = 8);

LoadSeries sinusoidal_load_series(const SinusoidalLoadParams& params, int n_stories, double dt, Eigen::Index n_steps);

/// Hamming-windowed sinc low-pass with cutoff (f_min + f_max)/2. The order is
/// the smallest even order whose gain stays <= 0.01 from f_max to Nyquist.
/// Results are memoized per (f_min, f_max, dt).
std::vector<double> design_lowpass(double f_min, double f_max, double dt);

/// |H(f)| of an FIR filter sampled at dt.
double fir_gain(std::span<const double> taps, double f, double dt);

/// Forward-backward FIR filtering; output has the input length and is aligned
/// with it (zero phase). Samples are zero-extended beyond both ends.
std::vector<double> filter_zero_phase(std::span<const double> x, std::span<const double> taps);

/// Number of extra white samples generated on each side so that the kept
/// window is free of filter start-up transients.
std::size_t band_noise_margin(const BandNoiseParams& params);

/// Padded white sequence in kN, rows = floors.
Eigen::MatrixXd band_noise_white(Rng& rng, const BandNoiseParams& params, int n_stories);

/// Filters a padded white sequence, crops the margins and converts kN -> N.
LoadSeries band_limit(const Eigen::MatrixXd& white_kn, const BandNoiseParams& params, Direction direction);

/// Case-2 load: independent filtered Gaussian sequences per floor.
LoadSeries generate_band_noise(Rng& rng, const BandNoiseParams& params, int n_stories,
                               Direction direction = Direction::Shear);

struct PowerSpectrum {
    std::vector<double> frequency;  // Hz
    std::vector<double> density;    // one-sided, units^2 / Hz
};

/// One-sided periodogram, normalized so that sum(density) * df equals the mean
/// square of the series. With segment_length > 0, averages non-overlapping
/// segments of that length (Welch, rectangular window).
PowerSpectrum compute_psd(std::span<const double> series, double dt, std::size_t segment_length = 0);

}  // namespace shmfcn
