#include "shmfcn/response_sim.hpp"

#include <cmath>
#include <string>

#include "shmfcn/errors.hpp"

namespace shmfcn {
namespace {

void check_time_args(double dt, double duration) {
    if (!(dt > 0.0)) throw DomainError("time step must be > 0");
    if (!(duration > 0.0)) throw DomainError("duration must be > 0");
}

void check_load(const SystemMatrices& sys, const LoadSeries& load, Eigen::Index samples) {
    if (load.values.rows() != sys.size())
        throw DomainError("load has " + std::to_string(load.values.rows()) + " rows, system has " +
                          std::to_string(sys.size()) + " dofs");
    if (load.values.cols() < samples)
        throw DomainError("load has " + std::to_string(load.values.cols()) + " samples, integration needs " +
                          std::to_string(samples));
}

Eigen::Index integer_ratio(double num, double den, const char* what) {
    const double ratio = num / den;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded)
        throw DomainError(std::string(what) + ": simulation rate " + std::to_string(num) +
                          " Hz is not an integer multiple of " + std::to_string(den) + " Hz");
    return static_cast<Eigen::Index>(rounded);
}

}  // namespace

void SensorConfig::validate() const {
    if (!(shear_rate_hz > 0.0) || !(axial_rate_hz > 0.0)) throw DomainError("sensor rates must be > 0");
    if (!(shear_window_s > 0.0) || !(axial_window_s > 0.0)) throw DomainError("sensor windows must be > 0");
}

Eigen::Index SensorConfig::shear_samples() const { return std::llround(shear_rate_hz * shear_window_s); }
Eigen::Index SensorConfig::axial_samples() const { return std::llround(axial_rate_hz * axial_window_s); }

Eigen::Index trajectory_samples(double dt, double duration) {
    check_time_args(dt, duration);
    return std::llround(duration / dt) + 1;
}

Eigen::MatrixXd integrate_modal(const SystemMatrices& sys, const ModalBasis& basis, const LoadSeries& load, double dt,
                                double duration) {
    const Eigen::Index samples = trajectory_samples(dt, duration);
    check_load(sys, load, samples);
    const Eigen::Index n = sys.size();

    const Eigen::MatrixXd modal_load = basis.shapes.transpose() * load.values.leftCols(samples);
    Eigen::MatrixXd q(n, samples);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double w = basis.omega(j);
        const double c = std::cos(w * dt), s = std::sin(w * dt);
        const double w2 = w * w;
        // Coefficients of the exact step for p(tau) = p_k + (p_{k+1} - p_k) tau / dt.
        const double a_p = (1.0 - c) / w2;
        const double a_dp = (dt - s / w) / (w2 * dt);
        const double b_p = s / w;
        const double b_dp = (1.0 - c) / (w2 * dt);
        double disp = 0.0, vel = 0.0;
        q(j, 0) = 0.0;
        for (Eigen::Index k = 0; k + 1 < samples; ++k) {
            const double p = modal_load(j, k);
            const double dp = modal_load(j, k + 1) - p;
            const double next_disp = disp * c + vel * s / w + p * a_p + dp * a_dp;
            const double next_vel = -disp * w * s + vel * c + p * b_p + dp * b_dp;
            disp = next_disp;
            vel = next_vel;
            q(j, k + 1) = disp;
        }
    }
    return basis.shapes * q;
}

NewmarkResult integrate_newmark_full(const SystemMatrices& sys, const LoadSeries& load, double dt, double duration,
                                     const NewmarkOptions& options) {
    const Eigen::Index samples = trajectory_samples(dt, duration);
    check_load(sys, load, samples);
    if (options.substeps < 1) throw DomainError("newmark substeps must be >= 1");
    if (!(options.beta > 0.0)) throw DomainError("newmark beta must be > 0");
    const Eigen::Index n = sys.size();
    const double h = dt / options.substeps;
    const double beta = options.beta, gamma = options.gamma;

    Eigen::VectorXd u = options.initial_displacement.value_or(Eigen::VectorXd::Zero(n));
    Eigen::VectorXd v = options.initial_velocity.value_or(Eigen::VectorXd::Zero(n));
    if (u.size() != n || v.size() != n) throw DomainError("newmark initial conditions have the wrong size");

    const Eigen::LLT<Eigen::MatrixXd> mass_solver(sys.mass);
    const Eigen::MatrixXd effective = sys.stiffness + sys.mass / (beta * h * h);
    const Eigen::LLT<Eigen::MatrixXd> solver(effective);
    if (solver.info() != Eigen::Success) throw NumericError("newmark effective stiffness is not positive definite");

    Eigen::VectorXd a = mass_solver.solve(load.values.col(0) - sys.stiffness * u);

    NewmarkResult out;
    out.displacement.resize(n, samples);
    out.velocity.resize(n, samples);
    out.displacement.col(0) = u;
    out.velocity.col(0) = v;
    for (Eigen::Index k = 0; k + 1 < samples; ++k) {
        const Eigen::VectorXd f0 = load.values.col(k);
        const Eigen::VectorXd df = load.values.col(k + 1) - f0;
        for (int sub = 1; sub <= options.substeps; ++sub) {
            const double frac = static_cast<double>(sub) / options.substeps;
            const Eigen::VectorXd f = f0 + frac * df;
            const Eigen::VectorXd rhs =
                f + sys.mass * (u / (beta * h * h) + v / (beta * h) + (0.5 / beta - 1.0) * a);
            const Eigen::VectorXd u_next = solver.solve(rhs);
            const Eigen::VectorXd a_next = (u_next - u) / (beta * h * h) - v / (beta * h) - (0.5 / beta - 1.0) * a;
            v += h * ((1.0 - gamma) * a + gamma * a_next);
            u = u_next;
            a = a_next;
        }
        out.displacement.col(k + 1) = u;
        out.velocity.col(k + 1) = v;
    }
    return out;
}

Eigen::MatrixXd integrate_newmark(const SystemMatrices& sys, const LoadSeries& load, double dt, double duration,
                                  const NewmarkOptions& options) {
    return integrate_newmark_full(sys, load, dt, duration, options).displacement;
}

Eigen::MatrixXd decimate(const Eigen::MatrixXd& trajectory, double sim_rate_hz, double rate_hz, double window_s) {
    if (!(sim_rate_hz > 0.0) || !(rate_hz > 0.0) || !(window_s > 0.0))
        throw DomainError("decimate: rates and window must be > 0");
    const Eigen::Index factor = integer_ratio(sim_rate_hz, rate_hz, "decimate");
    const Eigen::Index samples = std::llround(rate_hz * window_s);
    const Eigen::Index last = (samples - 1) * factor;
    if (last >= trajectory.cols())
        throw DomainError("decimate: trajectory has " + std::to_string(trajectory.cols()) + " samples, need " +
                          std::to_string(last + 1));
    Eigen::MatrixXd out(trajectory.rows(), samples);
    for (Eigen::Index j = 0; j < samples; ++j) out.col(j) = trajectory.col(j * factor);
    return out;
}

SensorBlocks sample_sensors(const Eigen::MatrixXd& shear_trajectory, const Eigen::MatrixXd& axial_trajectory,
                            double sim_rate_hz, const SensorConfig& cfg) {
    cfg.validate();
    return {decimate(shear_trajectory, sim_rate_hz, cfg.shear_rate_hz, cfg.shear_window_s),
            decimate(axial_trajectory, sim_rate_hz, cfg.axial_rate_hz, cfg.axial_window_s)};
}

double sigma_for_snr(const Eigen::MatrixXd& block, double snr_db) {
    if (block.size() == 0) throw DomainError("sigma_for_snr: empty block");
    const double mean_square = block.squaredNorm() / static_cast<double>(block.size());
    if (!(mean_square > 0.0)) throw DomainError("sigma_for_snr: block is identically zero, SNR undefined");
    return std::sqrt(mean_square / std::pow(10.0, snr_db / 10.0));
}

Eigen::MatrixXd add_noise(const Eigen::MatrixXd& block, double sigma, Rng& rng) {
    if (!(sigma >= 0.0)) throw DomainError("add_noise: sigma must be >= 0");
    Eigen::MatrixXd out = block;
    if (sigma == 0.0) return out;
    std::normal_distribution<double> dist(0.0, sigma);
    // Row-major traversal: channel by channel, time within channel.
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index k = 0; k < out.cols(); ++k) out(i, k) += dist(rng);
    return out;
}

double empirical_snr_db(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy) {
    if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) throw DomainError("empirical_snr_db: shape mismatch");
    const double noise = (noisy - clean).squaredNorm();
    if (!(noise > 0.0)) throw DomainError("empirical_snr_db: no noise present");
    return 10.0 * std::log10(clean.squaredNorm() / noise);
}

}  // namespace shmfcn
