#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace shmfcn {

enum class Direction { Shear, Axial };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

/// Parametric n-story chain. Values use the customary building units
/// (tonnes, kN/m); assemble_chain converts to SI.
struct BuildingConfig {
    int n_stories = 8;
    double floor_mass_t = 625.0;
    double shear_stiffness_kn_m = 1e6;
    double axial_stiffness_kn_m = 1e8;
    double damage_factor = 0.75;
    // Carried as metadata; the chain equations do not use it.
    double column_slenderness = 10.0;

    void validate() const;
    double floor_mass_kg() const { return floor_mass_t * 1e3; }
    double stiffness_n_m(Direction d) const;
};

/// Label 0 is the undamaged structure; label g >= 1 reduces inter-story
/// spring g (spring 1 connects the first floor to the ground).
struct DamageScenario {
    int label = 0;
};

struct SystemMatrices {
    Direction direction = Direction::Shear;
    Eigen::MatrixXd mass;       // kg, diagonal
    Eigen::MatrixXd stiffness;  // N/m, symmetric tridiagonal

    Eigen::Index size() const { return mass.rows(); }
};

struct ModalBasis {
    Eigen::VectorXd frequencies;  // Hz, ascending
    Eigen::VectorXd omega;        // rad/s
    Eigen::MatrixXd shapes;       // mass-normalized columns
};

/// Copy of `springs` with entry g (1-based) scaled by `factor`; g = 0 is the identity.
std::vector<double> damaged_stiffness(std::span<const double> springs, int g, double factor);

/// Base-fixed chain stiffness from inter-story springs k_1..k_n.
Eigen::MatrixXd chain_stiffness(std::span<const double> springs);

SystemMatrices assemble_chain(const BuildingConfig& config, Direction direction, DamageScenario scenario);

/// Generalized problem K phi = w^2 M phi for a diagonal M and tridiagonal K,
/// solved through the M^{-1/2} K M^{-1/2} similarity and implicit QL.
ModalBasis modal_basis(const SystemMatrices& sys);

std::vector<double> eigenfrequencies(const SystemMatrices& sys);

/// Analytic frequencies of the uniform base-fixed chain:
/// f_j = (1/pi) sqrt(k/m) sin((2j-1) pi / (2(2n+1))).
std::vector<double> closed_form_uniform_frequencies(int n, double k, double m);

/// Eigen-decomposition of a symmetric tridiagonal matrix in place.
/// `diag` receives the eigenvalues (ascending); `vectors` (n x n) the
/// orthonormal eigenvectors as columns.
void symmetric_tridiagonal_eigen(Eigen::VectorXd& diag, Eigen::VectorXd off, Eigen::MatrixXd& vectors);

}  // namespace shmfcn
