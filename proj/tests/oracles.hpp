#pragma once

// Reference computations that share no code with the library routes they
// check.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "subliminal/scaling.hpp"
#include "subliminal/transformer.hpp"
#include "subliminal/util.hpp"

namespace oracle {

using namespace subliminal;

inline const std::vector<int> kFullScaleGrid{100, 250, 500, 1000, 2000, 4000, 8000};

// rate(k) = baseline + amplitude / (1 + exp(-slope (ln k - ln k_mid)))
struct Logistic {
    double baseline;
    double amplitude;
    double slope;
    double k_mid;

    double rate(double k) const;
    // Closed-form k where rate - baseline == margin; nullopt when the
    // curve never gets there.
    std::optional<double> threshold_k(double margin) const;
    ScalingCurve sample(const std::vector<int>& grid) const;
};

// Smallest grid point strictly past the analytic crossing.
std::optional<int> first_grid_point_past(const std::vector<int>& grid, std::optional<double> threshold);

// Random logistic whose analytic crossing for `margin` sits at least 1% away
// from every grid point, so the oracle and the detector cannot disagree on
// rounding.
Logistic random_logistic(Rng& rng, double margin, const std::vector<int>& grid);

// Frobenius norm of a - b by explicit loops in long double.
double naive_frobenius(const NamedParameterMap& a, const NamedParameterMap& b);

struct PcaOracle {
    Eigen::MatrixXd coords;     // n x 2
    Eigen::Vector2d variance;   // over n - 1
};

// Covariance-route PCA: eigenvectors of Xc^T Xc / (n - 1). Cyclic Jacobi on
// the explicit D x D matrix when D is small, otherwise power iteration with
// deflation applied through Xc without forming the covariance.
PcaOracle covariance_pca(const Eigen::MatrixXd& X);

// Largest absolute entry positive, first index on ties.
void apply_sign_convention(Eigen::VectorXd& v);

// Symmetric eigen-decomposition by cyclic Jacobi rotations; eigenvalues
// descending with matching columns.
void jacobi_eigen(Eigen::MatrixXd A, Eigen::VectorXd& values, Eigen::MatrixXd& vectors);

}  // namespace oracle
