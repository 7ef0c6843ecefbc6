#include "shmfcn/structural_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <limits>
#include <sstream>
#include <string>

#include "shmfcn/errors.hpp"

namespace shmfcn {

std::string_view to_string(Direction d) { return d == Direction::Shear ? "shear" : "axial"; }

Direction direction_from_string(std::string_view s) {
    if (s == "shear") return Direction::Shear;
    if (s == "axial") return Direction::Axial;
    throw DomainError("unknown direction '" + std::string(s) + "' (expected shear|axial)");
}

void BuildingConfig::validate() const {
    if (n_stories < 1) throw DomainError("n_stories must be >= 1");
    if (!(floor_mass_t > 0.0)) throw DomainError("floor_mass must be > 0");
    if (!(shear_stiffness_kn_m > 0.0) || !(axial_stiffness_kn_m > 0.0))
        throw DomainError("stiffness values must be > 0");
    if (!(damage_factor > 0.0 && damage_factor <= 1.0)) throw DomainError("damage_factor must lie in (0, 1]");
}

double BuildingConfig::stiffness_n_m(Direction d) const {
    return (d == Direction::Shear ? shear_stiffness_kn_m : axial_stiffness_kn_m) * 1e3;
}

std::vector<double> damaged_stiffness(std::span<const double> springs, int g, double factor) {
    if (g < 0 || static_cast<std::size_t>(g) > springs.size())
        throw DomainError("damage label " + std::to_string(g) + " outside [0, " + std::to_string(springs.size()) + "]");
    std::vector<double> out(springs.begin(), springs.end());
    if (g > 0) out[static_cast<std::size_t>(g - 1)] *= factor;
    return out;
}

Eigen::MatrixXd chain_stiffness(std::span<const double> springs) {
    const auto n = static_cast<Eigen::Index>(springs.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double above = (i + 1 < n) ? springs[static_cast<std::size_t>(i + 1)] : 0.0;
        k(i, i) = springs[static_cast<std::size_t>(i)] + above;
        if (i + 1 < n) {
            k(i, i + 1) = -above;
            k(i + 1, i) = -above;
        }
    }
    return k;
}

SystemMatrices assemble_chain(const BuildingConfig& config, Direction direction, DamageScenario scenario) {
    config.validate();
    if (scenario.label < 0 || scenario.label > config.n_stories)
        throw DomainError("damage label " + std::to_string(scenario.label) + " outside [0, " +
                          std::to_string(config.n_stories) + "]");
    const std::vector<double> intact(static_cast<std::size_t>(config.n_stories), config.stiffness_n_m(direction));
    const auto springs = damaged_stiffness(intact, scenario.label, config.damage_factor);

    SystemMatrices sys;
    sys.direction = direction;
    sys.mass = Eigen::MatrixXd::Identity(config.n_stories, config.n_stories) * config.floor_mass_kg();
    sys.stiffness = chain_stiffness(springs);
    return sys;
}

// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
void symmetric_tridiagonal_eigen(Eigen::VectorXd& d, Eigen::VectorXd e, Eigen::MatrixXd& z) {
    const Eigen::Index n = d.size();
    z = Eigen::MatrixXd::Identity(n, n);
    if (n == 0) return;
    if (e.size() < n) e.conservativeResize(n);
    e(n - 1) = 0.0;

    constexpr int kMaxIterations = 60;
    for (Eigen::Index l = 0; l < n; ++l) {
        int iter = 0;
        Eigen::Index m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d(m)) + std::abs(d(m + 1));
                if (std::abs(e(m)) <= std::numeric_limits<double>::epsilon() * dd) break;
            }
            if (m != l) {
                if (++iter > kMaxIterations) throw NumericError("tridiagonal QL failed to converge");
                double g = (d(l + 1) - d(l)) / (2.0 * e(l));
                double r = std::hypot(g, 1.0);
                g = d(m) - d(l) + e(l) / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                Eigen::Index i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e(i);
                    const double b = c * e(i);
                    r = std::hypot(f, g);
                    e(i + 1) = r;
                    if (r == 0.0) {
                        d(i + 1) -= p;
                        e(m) = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d(i + 1) - p;
                    r = (d(i) - g) * s + 2.0 * c * b;
                    p = s * r;
                    d(i + 1) = g + p;
                    g = c * r - b;
                    for (Eigen::Index k = 0; k < n; ++k) {
                        f = z(k, i + 1);
                        z(k, i + 1) = s * z(k, i) + c * f;
                        z(k, i) = c * z(k, i) - s * f;
                    }
                }
                if (r == 0.0 && i >= l) continue;
                d(l) -= p;
                e(l) = g;
                e(m) = 0.0;
            }
        } while (m != l);
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return d(a) < d(b); });
    Eigen::VectorXd ds(n);
    Eigen::MatrixXd zs(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        ds(j) = d(order[static_cast<std::size_t>(j)]);
        zs.col(j) = z.col(order[static_cast<std::size_t>(j)]);
    }
    d = std::move(ds);
    z = std::move(zs);
}

ModalBasis modal_basis(const SystemMatrices& sys) {
    const Eigen::Index n = sys.size();
    if (n == 0 || sys.stiffness.rows() != n || sys.stiffness.cols() != n || sys.mass.cols() != n)
        throw DomainError("system matrices must be square and of equal size");

    Eigen::VectorXd inv_sqrt_m(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && sys.mass(i, j) != 0.0) throw DomainError("mass matrix must be diagonal");
        if (!(sys.mass(i, i) > 0.0)) throw DomainError("mass diagonal must be positive");
        inv_sqrt_m(i) = 1.0 / std::sqrt(sys.mass(i, i));
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (sys.stiffness(i, j) != sys.stiffness(j, i)) throw DomainError("stiffness matrix must be symmetric");
            if (std::abs(i - j) > 1 && sys.stiffness(i, j) != 0.0)
                throw DomainError("stiffness matrix must be tridiagonal (chain topology)");
        }

    Eigen::VectorXd diag(n), off = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        diag(i) = sys.stiffness(i, i) * inv_sqrt_m(i) * inv_sqrt_m(i);
        if (i + 1 < n) off(i) = sys.stiffness(i, i + 1) * inv_sqrt_m(i) * inv_sqrt_m(i + 1);
    }
    Eigen::MatrixXd vectors;
    symmetric_tridiagonal_eigen(diag, off, vectors);

    if (!(diag(0) > 0.0)) {
        std::ostringstream msg;
        msg << "stiffness matrix is not positive definite: smallest eigenvalue of M^-1/2 K M^-1/2 is " << diag(0);
        throw NumericError(msg.str());
    }

    ModalBasis basis;
    basis.omega = diag.array().sqrt();
    basis.frequencies = basis.omega / (2.0 * std::numbers::pi);
    basis.shapes = inv_sqrt_m.asDiagonal() * vectors;
    // Sign convention: top-floor component non-negative.
    for (Eigen::Index j = 0; j < n; ++j)
        if (basis.shapes(n - 1, j) < 0.0) basis.shapes.col(j) *= -1.0;
    return basis;
}

std::vector<double> eigenfrequencies(const SystemMatrices& sys) {
    const ModalBasis basis = modal_basis(sys);
    return {basis.frequencies.data(), basis.frequencies.data() + basis.frequencies.size()};
}

std::vector<double> closed_form_uniform_frequencies(int n, double k, double m) {
    if (n < 1 || !(k > 0.0) || !(m > 0.0)) throw DomainError("closed form requires n >= 1, k > 0, m > 0");
    std::vector<double> f(static_cast<std::size_t>(n));
    const double root = std::sqrt(k / m) / std::numbers::pi;
    for (int j = 1; j <= n; ++j)
        f[static_cast<std::size_t>(j - 1)] =
            root * std::sin((2.0 * j - 1.0) * std::numbers::pi / (2.0 * (2.0 * n + 1.0)));
    return f;
}

}  // namespace shmfcn
