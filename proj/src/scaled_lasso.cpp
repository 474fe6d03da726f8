#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "hat/regression.hpp"

namespace hat {

namespace {

double quantile_lambda0(int n, int p) {
    if (p == 1) return std::sqrt(2.0 / n) * 0.5;
    const boost::math::normal_distribution<double> std_normal;
    double L = 0.1, prev = 0.0;
    for (int it = 0; it < 1000 && std::fabs(L - prev) > 1e-3; ++it) {
        const double k = L * L * L * L + 2.0 * L * L;
        prev = L;
        L = -boost::math::quantile(std_normal, std::min(k / p, 0.99));
        L = 0.5 * (L + prev);
    }
    return std::sqrt(2.0 / n) * L;
}

// Coordinate descent for (1/2n)|y - X b|^2 + lam * sum_j s_j |b_j|, with
// s_j the column scale sqrt(|x_j|^2 / n). Updates `beta` and `resid` in place.
void lasso_cd(const Eigen::MatrixXd& X, const Eigen::VectorXd& colsq, double lam, Eigen::VectorXd& beta,
              Eigen::VectorXd& resid) {
    const double n = static_cast<double>(X.rows());
    for (int sweep = 0; sweep < 10000; ++sweep) {
        double max_step = 0.0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double a = colsq(j);
            if (a == 0.0) continue;
            const double old = beta(j);
            const double rho = X.col(j).dot(resid) / n + a * old;
            const double k = lam * std::sqrt(a);
            const double nb = rho > k ? (rho - k) / a : (rho < -k ? (rho + k) / a : 0.0);
            if (nb != old) {
                resid -= (nb - old) * X.col(j);
                beta(j) = nb;
                max_step = std::max(max_step, std::fabs(nb - old) * std::sqrt(a));
            }
        }
        if (max_step < 1e-10) break;
    }
}

}  // namespace

ScaledLassoResult scaled_lasso_sigma(const RegressionData& d, ScaledLassoPenalty penalty, double tol, int max_iter) {
    d.validate();
    if (d.n() < 2) throw std::invalid_argument("scaled lasso needs n >= 2");
    const double n = d.n();
    ScaledLassoResult res;
    res.lambda0 = penalty == ScaledLassoPenalty::quantile ? quantile_lambda0(d.n(), d.p())
                                                          : std::sqrt(2.0 * std::log(static_cast<double>(d.p())) / n);
    res.beta = Eigen::VectorXd::Zero(d.p());
    const Eigen::VectorXd colsq = d.X.colwise().squaredNorm().transpose() / n;
    Eigen::VectorXd resid = d.y;
    double sigma = resid.norm() / std::sqrt(n);
    for (int it = 1; it <= max_iter; ++it) {
        res.iterations = it;
        if (sigma == 0.0) {
            res.degenerate = true;
            res.converged = true;
            break;
        }
        lasso_cd(d.X, colsq, sigma * res.lambda0, res.beta, resid);
        const double next = resid.norm() / std::sqrt(n);
        const double change = std::fabs(next - sigma);
        sigma = next;
        if (change < tol) {
            res.converged = true;
            break;
        }
    }
    res.sigma = sigma;
    if (sigma == 0.0) res.degenerate = true;
    return res;
}

}  // namespace hat
