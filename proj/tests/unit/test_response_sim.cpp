#include "doctest.h"
#include "shmfcn/errors.hpp"
#include "shmfcn/excitation.hpp"
#include "shmfcn/response_sim.hpp"

using namespace shmfcn;

namespace {

SystemMatrices one_dof(double m, double k) {
    SystemMatrices sys;
    sys.mass = Eigen::MatrixXd::Constant(1, 1, m);
    sys.stiffness = Eigen::MatrixXd::Constant(1, 1, k);
    return sys;
}

LoadSeries band_load(std::uint64_t seed, Eigen::Index steps = 668) {
    BandNoiseParams p;
    p.n_steps = static_cast<std::size_t>(steps);
    Rng rng(seed);
    return generate_band_noise(rng, p, 8);
}

}  // namespace

TEST_SUITE("response_sim") {

TEST_CASE("trajectory sample count") {
    CHECK(trajectory_samples(1.0 / 667, 10.0) == 6671);
    CHECK(trajectory_samples(1.0 / 667, 1.0) == 668);
}

TEST_CASE("zero load gives zero response") {
    auto sys = assemble_chain(BuildingConfig{}, Direction::Shear, DamageScenario{2});
    LoadSeries load;
    load.values = Eigen::MatrixXd::Zero(8, 668);
    load.dt = 1.0 / 667;
    CHECK(integrate_modal(sys, modal_basis(sys), load, load.dt, 1.0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(integrate_newmark(sys, load, load.dt, 1.0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one-dof harmonic response matches the closed form") {
    const double m = 2.0, w = 2 * M_PI * 3.0, k = m * w * w, W = 2 * M_PI * 1.1, F = 5.0;
    const double dt = 1e-5, T = 1.0;
    const auto n = trajectory_samples(dt, T);
    LoadSeries load;
    load.values.resize(1, n);
    for (Eigen::Index t = 0; t < n; ++t) load.values(0, t) = F * std::sin(W * t * dt);
    load.dt = dt;
    auto sys = one_dof(m, k);
    auto u = integrate_modal(sys, modal_basis(sys), load, dt, T);
    const double r = W / w;
    double peak = 0, worst = 0;
    for (Eigen::Index t = 0; t < n; t += 997) {
        const double tt = t * dt;
        const double exact = F / k / (1 - r * r) * (std::sin(W * tt) - r * std::sin(w * tt));
        peak = std::max(peak, std::abs(exact));
        worst = std::max(worst, std::abs(u(0, t) - exact));
    }
    const double exact_end = F / k / (1 - r * r) * (std::sin(W * T) - r * std::sin(w * T));
    CHECK(std::abs(u(0, n - 1) - exact_end) <= 1e-8 * peak);
    CHECK(worst <= 1e-8 * peak);
}

TEST_CASE("modal and Newmark agree on a band-noise load") {
    auto sys = assemble_chain(BuildingConfig{}, Direction::Shear, DamageScenario{5});
    auto load = band_load(31);
    auto um = integrate_modal(sys, modal_basis(sys), load, load.dt, 1.0);
    auto un = integrate_newmark(sys, load, load.dt, 1.0);
    CHECK((um - un).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("Newmark converges at second order") {
    auto sys = assemble_chain(BuildingConfig{}, Direction::Shear, DamageScenario{0});
    auto load = band_load(5);
    auto exact = integrate_modal(sys, modal_basis(sys), load, load.dt, 1.0);
    double err[3];
    int i = 0;
    for (int sub : {1, 2, 4}) {
        NewmarkOptions o;
        o.substeps = sub;
        err[i++] = (integrate_newmark(sys, load, load.dt, 1.0, o) - exact).cwiseAbs().maxCoeff();
    }
    CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.15));
    CHECK(err[1] / err[2] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("Newmark conserves energy in free vibration") {
    auto sys = assemble_chain(BuildingConfig{}, Direction::Shear, DamageScenario{0});
    auto mb = modal_basis(sys);
    LoadSeries load;
    load.values = Eigen::MatrixXd::Zero(8, 6671);
    load.dt = 1.0 / 667;
    NewmarkOptions o;
    o.initial_displacement = (0.01 * (mb.shapes.col(0) + mb.shapes.col(5))).eval();
    o.initial_velocity = Eigen::VectorXd::Zero(8);
    auto res = integrate_newmark_full(sys, load, load.dt, 10.0, o);
    auto energy = [&](Eigen::Index t) {
        const Eigen::VectorXd u = res.displacement.col(t), v = res.velocity.col(t);
        return 0.5 * v.dot(sys.mass * v) + 0.5 * u.dot(sys.stiffness * u);
    };
    const double e0 = energy(0);
    double worst = 0;
    for (Eigen::Index t = 0; t < res.displacement.cols(); ++t) worst = std::max(worst, std::abs(energy(t) / e0 - 1));
    CHECK(worst < 1e-3);
}

TEST_CASE("response is linear in the load") {
    auto sys = assemble_chain(BuildingConfig{}, Direction::Axial, DamageScenario{7});
    auto mb = modal_basis(sys);
    auto l1 = band_load(1), l2 = band_load(2);
    LoadSeries sum = l1;
    sum.values += l2.values;
    auto u1 = integrate_modal(sys, mb, l1, l1.dt, 1.0);
    auto u2 = integrate_modal(sys, mb, l2, l2.dt, 1.0);
    auto us = integrate_modal(sys, mb, sum, sum.dt, 1.0);
    CHECK((us - u1 - u2).cwiseAbs().maxCoeff() <= 1e-9 * us.cwiseAbs().maxCoeff());

    LoadSeries twice = l1;
    twice.values *= 2.0;
    CHECK(integrate_modal(sys, mb, twice, twice.dt, 1.0) == 2.0 * u1);
}

TEST_CASE("integration argument checks") {
    auto sys = assemble_chain(BuildingConfig{}, Direction::Shear, DamageScenario{0});
    auto load = band_load(3);
    CHECK_THROWS_AS(integrate_modal(sys, modal_basis(sys), load, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(integrate_newmark(sys, load, -1.0, 1.0), DomainError);
    CHECK_THROWS_AS(integrate_modal(sys, modal_basis(sys), load, load.dt, 10.0), DomainError);
}

TEST_CASE("decimation") {
    Eigen::MatrixXd traj(2, 6671);
    for (Eigen::Index t = 0; t < traj.cols(); ++t) traj(0, t) = 3.0, traj(1, t) = static_cast<double>(t);
    auto d = decimate(traj, 667, 66.7, 10);
    REQUIRE(d.cols() == 667);
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
        CHECK(d(0, j) == 3.0);
        CHECK(d(1, j) == 10.0 * j);
    }
    CHECK_THROWS_AS(decimate(traj, 667, 70, 10), DomainError);
}

TEST_CASE("decimation aliases 69.2 Hz to 2.5 Hz") {
    Eigen::MatrixXd traj(1, 6671);
    for (Eigen::Index t = 0; t < traj.cols(); ++t) traj(0, t) = std::sin(2 * M_PI * 69.2 * t / 667.0);
    auto d = decimate(traj, 667, 66.7, 10);
    std::vector<double> x(d.cols());
    for (Eigen::Index t = 0; t < d.cols(); ++t) x[t] = d(0, t);
    auto psd = compute_psd(x, 1.0 / 66.7);
    const auto peak = std::max_element(psd.density.begin(), psd.density.end()) - psd.density.begin();
    CHECK(std::abs(psd.frequency[peak] - 2.5) <= psd.frequency[1]);
}

TEST_CASE("sensor blocks have the configured lengths") {
    Eigen::MatrixXd shear = Eigen::MatrixXd::Random(8, 6671), axial = Eigen::MatrixXd::Random(8, 668);
    auto blocks = sample_sensors(shear, axial, 667, SensorConfig{});
    CHECK(blocks.shear.rows() == 8);
    CHECK(blocks.shear.cols() == 667);
    CHECK(blocks.axial.cols() == 667);
    CHECK(blocks.axial(3, 666) == axial(3, 666));
    CHECK(blocks.shear(3, 666) == shear(3, 6660));
}

TEST_CASE("noise level from the target SNR") {
    CHECK(sigma_for_snr(Eigen::MatrixXd::Ones(3, 4), 10.0) == doctest::Approx(std::sqrt(0.1)));
    CHECK(sigma_for_snr(Eigen::MatrixXd::Constant(2, 2, 2.0), 0.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(sigma_for_snr(Eigen::MatrixXd::Zero(2, 2), 10.0), DomainError);
}

TEST_CASE("additive noise statistics") {
    Rng rng(77);
    Eigen::MatrixXd block = Eigen::MatrixXd::Random(4, 50);
    CHECK(add_noise(block, 0.0, rng) == block);

    const double sigma = 2.0;
    auto noise = add_noise(Eigen::MatrixXd::Zero(1000, 1000), sigma, rng);
    CHECK(std::abs(noise.mean()) <= 0.005 * sigma);
    const double var = noise.array().square().mean() - noise.mean() * noise.mean();
    CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.01));

    auto pair = add_noise(Eigen::MatrixXd::Zero(2, 100000), sigma, rng);
    const double cov = (pair.row(0).array() - pair.row(0).mean()).cwiseProduct(pair.row(1).array() - pair.row(1).mean()).mean();
    CHECK(std::abs(cov) < 0.01 * sigma * sigma);
    CHECK_THROWS_AS(add_noise(block, -1.0, rng), DomainError);
}

TEST_CASE("empirical SNR of calibrated noise") {
    Rng rng(5);
    Eigen::MatrixXd clean = Eigen::MatrixXd::Random(8, 20000);
    auto noisy = add_noise(clean, sigma_for_snr(clean, 15.0), rng);
    CHECK(empirical_snr_db(clean, noisy) == doctest::Approx(15.0).epsilon(0.01));
}

}
