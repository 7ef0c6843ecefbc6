#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "shmfcn/excitation.hpp"
#include "shmfcn/rng.hpp"
#include "shmfcn/structural_model.hpp"

namespace shmfcn {

struct SensorConfig {
    double shear_rate_hz = 66.7;
    double axial_rate_hz = 667.0;
    double shear_window_s = 10.0;
    double axial_window_s = 1.0;

    void validate() const;
    Eigen::Index shear_samples() const;
    Eigen::Index axial_samples() const;
};

/// Number of samples t_k = k dt, k = 0..round(T/dt), covering [0, T].
Eigen::Index trajectory_samples(double dt, double duration);

/// Exact undamped modal integration for loads that vary linearly between
/// samples. Zero initial conditions. Returns displacements (m), one row per dof.
Eigen::MatrixXd integrate_modal(const SystemMatrices& sys, const ModalBasis& basis, const LoadSeries& load, double dt,
                                double duration);

struct NewmarkOptions {
    double beta = 0.25;
    double gamma = 0.5;
    // Internal steps per load sample; the load is interpolated linearly.
    int substeps = 1;
    std::optional<Eigen::VectorXd> initial_displacement;
    std::optional<Eigen::VectorXd> initial_velocity;
};

struct NewmarkResult {
    Eigen::MatrixXd displacement;
    Eigen::MatrixXd velocity;
};

NewmarkResult integrate_newmark_full(const SystemMatrices& sys, const LoadSeries& load, double dt, double duration,
                                     const NewmarkOptions& options = {});

/// Average-acceleration Newmark reference integrator (displacements only).
Eigen::MatrixXd integrate_newmark(const SystemMatrices& sys, const LoadSeries& load, double dt, double duration,
                                  const NewmarkOptions& options = {});

/// Plain decimation: sample j of the output is column j * (sim_rate / rate).
Eigen::MatrixXd decimate(const Eigen::MatrixXd& trajectory, double sim_rate_hz, double rate_hz, double window_s);

struct SensorBlocks {
    Eigen::MatrixXd shear;
    Eigen::MatrixXd axial;
};

SensorBlocks sample_sensors(const Eigen::MatrixXd& shear_trajectory, const Eigen::MatrixXd& axial_trajectory,
                            double sim_rate_hz, const SensorConfig& cfg);

/// sigma^2 = mean(r^2) / 10^(snr_db / 10) over every channel and sample.
double sigma_for_snr(const Eigen::MatrixXd& block, double snr_db);

/// u = r + eps with eps ~ N(0, sigma^2) i.i.d. per entry.
Eigen::MatrixXd add_noise(const Eigen::MatrixXd& block, double sigma, Rng& rng);

/// 10 log10(mean r^2 / mean (u - r)^2).
double empirical_snr_db(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy);

struct ResponseRecord {
    Eigen::MatrixXd shear_block;
    Eigen::MatrixXd axial_block;
    Eigen::MatrixXd noise_free_shear;
    Eigen::MatrixXd noise_free_axial;
    int scenario = 0;
    std::uint64_t seed = 0;
    std::optional<double> snr_db;
    double sigma_shear = 0.0;
    double sigma_axial = 0.0;
};

}  // namespace shmfcn
