#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Sparse>

#include "hat/regression.hpp"
#include "hat/rng.hpp"

namespace hat {

namespace {

double soft(double v, double k) {
    if (v > k) return v - k;
    if (v < -k) return v + k;
    return 0.0;
}

double sup_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

void RegressionData::validate() const {
    if (X.rows() != y.size()) throw std::invalid_argument("X and y have different numbers of rows");
    if (X.rows() < 1 || X.cols() < 1) throw std::invalid_argument("empty design matrix");
    if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("design and response must be finite");
}

RegressionData RegressionData::rows(const std::vector<int>& idx) const {
    RegressionData out;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.X.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
        out.y(static_cast<Eigen::Index>(i)) = y(idx[i]);
    }
    return out;
}

Eigen::MatrixXd build_expansion(const Tree& t) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(t.n_leaves(), t.size());
    for (NodeId u = 0; u < t.size(); ++u) {
        const auto r = t.leaves_under(u);
        A.col(u).segment(r.start, r.len).setOnes();
    }
    return A;
}

double rare_objective(const RegressionData& d, const Eigen::MatrixXd& A, const Eigen::VectorXd& gamma, double lambda,
                      double nu, int root_column) {
    const Eigen::VectorXd theta = A * gamma;
    const double loss = (d.y - d.X * theta).squaredNorm() / (2.0 * d.n());
    const double pen_gamma = gamma.lpNorm<1>() - std::fabs(gamma(root_column));
    return loss + lambda * nu * pen_gamma + lambda * (1.0 - nu) * theta.lpNorm<1>();
}

RareFit fit_rare(const RegressionData& d, const Eigen::MatrixXd& A, double lambda, double nu, const AdmmOptions& opt,
                 const RareFit* warm) {
    d.validate();
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(nu >= 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in [0, 1]");
    if (A.rows() != d.p()) throw std::invalid_argument("expansion does not match the design width");
    if (!(opt.rho > 0.0) || opt.max_iter < 1 || opt.sweep < 1) throw std::invalid_argument("bad ADMM options");

    const double n = d.n();
    double rho = opt.rho;
    const Eigen::Index m = A.cols();
    const Eigen::Index p = A.rows();
    const Eigen::SparseMatrix<double> As = A.sparseView();
    const Eigen::SparseMatrix<double> AsT = As.transpose();
    const Eigen::MatrixXd XA = d.X * As;
    const Eigen::MatrixXd AtA = Eigen::MatrixXd(AsT * As);
    Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(m, m);
    XtX.selfadjointView<Eigen::Lower>().rankUpdate(XA.transpose(), 1.0 / n);
    XtX.triangularView<Eigen::StrictlyUpper>() = XtX.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt;
    auto factor = [&] {
        Eigen::MatrixXd M = XtX + rho * AtA;
        M.diagonal().array() += rho;
        llt.compute(M);
        if (llt.info() != Eigen::Success) throw std::runtime_error("ADMM system is not positive definite");
    };
    const Eigen::VectorXd c = XA.transpose() * d.y / n;

    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd z1 = Eigen::VectorXd::Zero(m), u1 = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd z2 = Eigen::VectorXd::Zero(p), u2 = Eigen::VectorXd::Zero(p);
    if (warm && warm->gamma.size() == m && warm->dual_gamma.size() == m && warm->dual_theta.size() == p) {
        gamma = warm->gamma;
        z1 = gamma;
        z2 = A * gamma;
        if (opt.adaptive && warm->rho > 0.0) rho = warm->rho;
        u1 = warm->dual_gamma / rho;
        u2 = warm->dual_theta / rho;
    }
    factor();

    RareFit fit;
    fit.lambda = lambda;
    fit.nu = nu;
    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best = gamma;
    Eigen::VectorXd theta(p), z1_old(m), z2_old(p);
    double r_pri = 0.0, r_dual = 0.0;
    int it = 0;
    bool converged = false;
    while (it < opt.max_iter) {
        ++it;
        const double k1 = lambda * nu / rho;
        const double k2 = lambda * (1.0 - nu) / rho;
        gamma = llt.solve(c + rho * (z1 - u1) + rho * (AsT * (z2 - u2)));
        theta.noalias() = As * gamma;
        z1_old = z1;
        z2_old = z2;
        for (Eigen::Index j = 0; j < m; ++j) z1(j) = soft(gamma(j) + u1(j), j == 0 ? 0.0 : k1);
        for (Eigen::Index i = 0; i < p; ++i) z2(i) = soft(theta(i) + u2(i), k2);
        u1 += gamma - z1;
        u2 += theta - z2;
        r_pri = std::max(sup_norm(gamma - z1), sup_norm(theta - z2));
        r_dual = rho * sup_norm((z1 - z1_old) + AsT * (z2 - z2_old));
        converged = r_pri <= opt.tol && r_dual <= opt.tol;
        if (converged || it % opt.sweep == 0) {
            const double obj = rare_objective(d, A, z1, lambda, nu);
            if (obj < best_obj) {
                best_obj = obj;
                best = z1;
            }
            fit.objective_trace.push_back(best_obj);
        }
        if (converged) break;
        // Residual balancing: keep the primal and dual residuals within a
        // factor of ten by doubling or halving rho.
        if (opt.adaptive && it % 10 == 0 && it <= opt.max_iter / 2) {
            double scale = 1.0;
            if (r_pri > 10.0 * r_dual) scale = 2.0;
            else if (r_dual > 10.0 * r_pri) scale = 0.5;
            if (scale != 1.0) {
                rho *= scale;
                u1 /= scale;
                u2 /= scale;
                factor();
            }
        }
    }

    // The thresholded copy carries the exact zeros.
    fit.gamma = converged ? z1 : best;
    fit.theta = A * fit.gamma;
    fit.objective = rare_objective(d, A, fit.gamma, lambda, nu);
    fit.dual_gamma = rho * u1;
    fit.dual_theta = rho * u2;
    fit.iterations = it;
    fit.rho = rho;
    fit.primal_residual = r_pri;
    fit.dual_residual = r_dual;
    fit.converged = converged;

    // Stationarity of the gamma-problem with the scaled duals as subgradients,
    // plus their feasibility against the penalty levels.
    const Eigen::VectorXd grad = XA.transpose() * (XA * fit.gamma - d.y) / n;
    const Eigen::VectorXd station = grad + fit.dual_gamma + A.transpose() * fit.dual_theta;
    double feas = std::fabs(fit.dual_gamma(0));
    for (Eigen::Index j = 1; j < m; ++j) feas = std::max(feas, std::fabs(fit.dual_gamma(j)) - lambda * nu);
    for (Eigen::Index i = 0; i < p; ++i) feas = std::max(feas, std::fabs(fit.dual_theta(i)) - lambda * (1.0 - nu));
    fit.kkt_residual = std::max({sup_norm(station), feas, r_pri});
    return fit;
}

std::vector<RareGridPoint> default_rare_grid(const RegressionData& d, const std::vector<double>& nus, int n_lambda,
                                             double min_ratio) {
    d.validate();
    if (n_lambda < 1 || !(min_ratio > 0.0 && min_ratio <= 1.0)) throw std::invalid_argument("bad grid shape");
    const double score = (d.X.transpose() * d.y).cwiseAbs().maxCoeff() / d.n();
    std::vector<RareGridPoint> grid;
    for (double nu : nus) {
        if (!(nu >= 0.0 && nu < 1.0)) throw std::invalid_argument("grid nu must lie in [0, 1)");
        // At or above this level the theta penalty alone keeps theta at zero.
        const double top = std::max(score / (1.0 - nu), 1e-12);
        for (int k = 0; k < n_lambda; ++k) {
            const double frac = n_lambda == 1 ? 0.0 : static_cast<double>(k) / (n_lambda - 1);
            grid.push_back({top * std::pow(min_ratio, frac), nu});
        }
    }
    return grid;
}

CvResult cross_validate_rare(const RegressionData& d, const Eigen::MatrixXd& A, const std::vector<RareGridPoint>& grid,
                             int folds, std::uint64_t seed, const AdmmOptions& opt) {
    d.validate();
    if (grid.empty()) throw std::invalid_argument("empty tuning grid");
    if (folds < 2 || folds > d.n()) throw std::invalid_argument("folds must lie in [2, n]");

    std::vector<int> order(d.n());
    std::iota(order.begin(), order.end(), 0);
    Philox rng(seed);
    for (int i = d.n() - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform() * (i + 1));
        std::swap(order[i], order[j]);
    }

    CvResult res;
    res.cv_error.assign(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train, test;
        for (int i = 0; i < d.n(); ++i) (i % folds == f ? test : train).push_back(order[i]);
        const RegressionData tr = d.rows(train);
        const RegressionData te = d.rows(test);
        const RareFit* prev = nullptr;
        RareFit last;
        std::vector<double> fold_error(grid.size(), 0.0);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            // Repeated grid points reuse the earlier fit.
            const auto same = std::find_if(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(g),
                                           [&](const RareGridPoint& q) {
                                               return q.lambda == grid[g].lambda && q.nu == grid[g].nu;
                                           });
            if (same != grid.begin() + static_cast<std::ptrdiff_t>(g)) {
                fold_error[g] = fold_error[static_cast<std::size_t>(same - grid.begin())];
                continue;
            }
            // Warm start along each nu's lambda path.
            if (g > 0 && grid[g].nu != grid[g - 1].nu) prev = nullptr;
            last = fit_rare(tr, A, grid[g].lambda, grid[g].nu, opt, prev);
            prev = &last;
            fold_error[g] = (te.y - te.X * last.theta).squaredNorm();
        }
        for (std::size_t g = 0; g < grid.size(); ++g) res.cv_error[g] += fold_error[g];
    }
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        res.cv_error[g] /= d.n();
        if (res.cv_error[g] < res.cv_error[best]) best = g;
    }
    res.best = grid[best];
    return res;
}

}  // namespace hat
