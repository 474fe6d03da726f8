#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hat/pvalue_assignment.hpp"
#include "hat/tree.hpp"

namespace hat {

/// Linear model data. Columns of X follow the tree's leaf order.
struct RegressionData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
    void validate() const;
    /// Rows selected by index, for cross-validation folds.
    RegressionData rows(const std::vector<int>& idx) const;
};

/// A(i, j) = 1 iff leaf i (leaf order) lies in the subtree of node j
/// (node-id order), so theta = A * gamma.
Eigen::MatrixXd build_expansion(const Tree& t);

struct AdmmOptions {
    double rho = 1.0;
    int max_iter = 5000;
    double tol = 1e-7;     // on the sup-norm primal and dual residuals
    int sweep = 25;        // iterations between objective checkpoints
    bool adaptive = true;  // residual-balancing updates of rho
};

/// Solution of the tree-aggregating rare-feature problem
///
///   min_gamma (1/2n)|y - X A gamma|^2 + lambda nu |gamma without root|_1
///             + lambda (1 - nu) |A gamma|_1,
///
/// where the root coefficient of gamma is unpenalized.
struct RareFit {
    Eigen::VectorXd theta;
    Eigen::VectorXd gamma;
    double lambda = 0.0;
    double nu = 0.0;
    double objective = 0.0;
    /// Scaled dual variables: subgradients of the gamma and theta penalties.
    Eigen::VectorXd dual_gamma;
    Eigen::VectorXd dual_theta;
    int iterations = 0;
    double rho = 0.0;  // final penalty parameter
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double kkt_residual = 0.0;
    bool converged = false;
    /// Objective of the best iterate seen after each sweep (nonincreasing).
    std::vector<double> objective_trace;
};

double rare_objective(const RegressionData& d, const Eigen::MatrixXd& A, const Eigen::VectorXd& gamma,
                      double lambda, double nu, int root_column = 0);

/// ADMM with one auxiliary block per l1 term. `warm` seeds the primal and
/// dual state when it has matching dimensions.
RareFit fit_rare(const RegressionData& d, const Eigen::MatrixXd& A, double lambda, double nu,
                 const AdmmOptions& opt = {}, const RareFit* warm = nullptr);

struct RareGridPoint {
    double lambda = 0.0;
    double nu = 0.0;
};

/// Ten log-spaced lambdas per nu, from the all-zero threshold down by 1e-3.
std::vector<RareGridPoint> default_rare_grid(const RegressionData& d, const std::vector<double>& nus = {0.5, 0.9},
                                             int n_lambda = 10, double min_ratio = 1e-3);

struct CvResult {
    RareGridPoint best;
    std::vector<double> cv_error;  // per grid point, grid order
};

/// K-fold cross-validation over the grid by mean held-out squared error.
/// Rows are shuffled with `seed`; ties keep the earliest grid point.
CvResult cross_validate_rare(const RegressionData& d, const Eigen::MatrixXd& A,
                             const std::vector<RareGridPoint>& grid, int folds, std::uint64_t seed,
                             const AdmmOptions& opt = {});

struct ScaledLassoResult {
    double sigma = 0.0;
    Eigen::VectorXd beta;
    double lambda0 = 0.0;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;  // sigma collapsed to zero
};

/// Penalty level for the scaled lasso. `quantile` is the finite-sample
/// choice sqrt(2/n) * L with L solving L = -qnorm(min((L^4 + 2L^2)/p, 0.99));
/// `universal` is sqrt(2 log p / n).
enum class ScaledLassoPenalty { quantile, universal };

/// Joint estimate of coefficients and noise level by alternating a lasso
/// fit at penalty sigma * lambda0 with sigma = |y - X beta| / sqrt(n).
ScaledLassoResult scaled_lasso_sigma(const RegressionData& d,
                                     ScaledLassoPenalty penalty = ScaledLassoPenalty::quantile,
                                     double tol = 1e-6, int max_iter = 200);

/// sum_i (theta_i - mean)^2, i.e. theta' G theta with G the centering matrix.
double centering_quadratic(const Eigen::Ref<const Eigen::VectorXd>& theta);

/// The p-vector holding G_u theta_u on the coordinates of u's leaves.
Eigen::VectorXd projection_target(const Tree& t, const Eigen::VectorXd& theta, NodeId u);

struct ProjectionOptions {
    int max_iter = 50000;
    double feas_tol = 1e-9;  // constraint slack accepted at termination
    double gap_tol = 1e-12;  // relative duality gap
};

struct ProjectionResult {
    Eigen::VectorXd b;
    double objective = 0.0;       // b' Sigma b
    double max_violation = 0.0;   // worst constraint excess (<= 0 when feasible)
    double duality_gap = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// min b' Sigma b  s.t. |<omega, Sigma b - w>| <= |w|_2 * lambda_n for
/// omega in {e_1, ..., e_p, w / |w|_2}. Solved by accelerated projected
/// gradient on the dual. Returns b = 0 when w = 0.
ProjectionResult solve_projection(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w, double lambda_n,
                                  const ProjectionOptions& opt = {});

/// Largest constraint excess of b, over all p + 1 constraints.
double projection_violation(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w, double lambda_n,
                            const Eigen::VectorXd& b);

struct DebiasResult {
    NodeId node = 0;
    double q_hat = 0.0;        // plug-in quadratic form
    Eigen::VectorXd b;         // projection direction
    double q_debiased = 0.0;
    double variance = 0.0;
    double pvalue = 1.0;
    double tau = 1.0;
    double lambda_n = 0.0;
    bool converged = true;     // projection solver status
};

/// Debiased quadratic-form test of "theta is constant on u's leaves".
/// `sigma_matrix` is X'X/n.
DebiasResult debias_node(const RegressionData& d, const Eigen::MatrixXd& sigma_matrix, const Eigen::VectorXd& theta,
                         const Tree& t, NodeId u, double sigma_hat, double tau, double lambda_n,
                         const ProjectionOptions& opt = {});

/// Two-sided normal p-value 2 (1 - Phi(|q| / sqrt(variance))).
double debiased_pvalue(double q_debiased, double variance);

/// Design handed to the scaled lasso: the tree-expanded X A (sparse in the
/// aggregated coordinates) or the raw leaf columns X.
enum class NoiseDesign { expanded, leaves };

struct RegressionPValueConfig {
    double lambda_n_c = 1.0;   // lambda_n = c sqrt(log p / n)
    double tau = 1.0;
    int folds = 10;
    std::uint64_t seed = 1;
    std::vector<RareGridPoint> grid;  // empty: default_rare_grid
    AdmmOptions admm;
    ProjectionOptions projection;
    ScaledLassoPenalty sigma_penalty = ScaledLassoPenalty::quantile;
    NoiseDesign sigma_design = NoiseDesign::expanded;
    int threads = 1;
};

struct RegressionPValues {
    PValueAssignment pvalues;
    RareFit fit;
    CvResult cv;
    ScaledLassoResult sigma;
    double lambda_n = 0.0;
    std::vector<DebiasResult> nodes;  // internal-node order
    bool converged = true;
};

/// Cross-validated rare-feature fit, scaled-lasso noise level, then a
/// debiased p-value at every internal node.
RegressionPValues node_pvalues_regression(const RegressionData& d, const Tree& t,
                                          const RegressionPValueConfig& cfg = {});

}  // namespace hat
