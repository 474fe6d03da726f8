#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hat/regression.hpp"

namespace hat {

// Dual of the projection problem. Stack the constraint directions as the rows
// of C = [I; w'/|w|] and let kappa = |w| lambda_n. With multipliers eta the
// dual is
//
//   min_eta  (1/4) eta' C Sigma C' eta + eta' C w + kappa |eta|_1,
//
// and the primal solution is b = -C' eta / 2. The gradient g of the smooth
// part equals -C (Sigma b - w), so primal feasibility is |g|_inf <= kappa.
// The l1 term is the split nonnegative form eta = eta+ - eta- projected onto
// the orthant, which is a soft-threshold step on eta.

namespace {

struct DualOps {
    const Eigen::MatrixXd& sigma;
    Eigen::VectorXd w_unit;
    double w_norm;

    Eigen::VectorXd ct(const Eigen::VectorXd& eta) const {
        const Eigen::Index p = sigma.rows();
        return eta.head(p) + eta(p) * w_unit;
    }
    Eigen::VectorXd c(const Eigen::VectorXd& v) const {
        const Eigen::Index p = sigma.rows();
        Eigen::VectorXd out(p + 1);
        out.head(p) = v;
        out(p) = w_unit.dot(v);
        return out;
    }
    // Gradient (1/2) C Sigma C' eta + C w.
    Eigen::VectorXd grad(const Eigen::VectorXd& eta) const {
        Eigen::VectorXd g = c(sigma * ct(eta)) * 0.5;
        g.head(sigma.rows()) += w_unit * w_norm;
        g(sigma.rows()) += w_norm;
        return g;
    }
};

double soft(double v, double k) {
    if (v > k) return v - k;
    if (v < -k) return v + k;
    return 0.0;
}

}  // namespace

double projection_violation(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w, double lambda_n,
                            const Eigen::VectorXd& b) {
    const double wn = w.norm();
    const double kappa = wn * lambda_n;
    const Eigen::VectorXd r = sigma * b - w;
    double worst = r.cwiseAbs().maxCoeff() - kappa;
    if (wn > 0.0) worst = std::max(worst, std::fabs(w.dot(r)) / wn - kappa);
    return worst;
}

ProjectionResult solve_projection(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w, double lambda_n,
                                  const ProjectionOptions& opt) {
    const Eigen::Index p = sigma.rows();
    if (sigma.cols() != p || w.size() != p) throw std::invalid_argument("projection dimensions do not match");
    if (!(lambda_n >= 0.0)) throw std::invalid_argument("lambda_n must be >= 0");

    ProjectionResult res;
    const double wn = w.norm();
    if (wn == 0.0) {
        res.b = Eigen::VectorXd::Zero(p);
        res.converged = true;
        res.max_violation = projection_violation(sigma, w, lambda_n, res.b);
        return res;
    }
    const double kappa = wn * lambda_n;
    const DualOps ops{sigma, w / wn, wn};

    // |C' C| = 2, so the gradient is Lipschitz with constant <= lambda_max(Sigma).
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
    const double L = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
    const double step = 1.0 / L;

    Eigen::VectorXd eta = Eigen::VectorXd::Zero(p + 1);
    Eigen::VectorXd y = eta, prev = eta;
    double t = 1.0;
    auto status = [&](const Eigen::VectorXd& e, double& viol, double& gap) {
        const Eigen::VectorXd g = ops.grad(e);
        viol = g.cwiseAbs().maxCoeff() - kappa;
        gap = e.dot(g) + kappa * e.lpNorm<1>();
    };
    for (int it = 1; it <= opt.max_iter; ++it) {
        res.iterations = it;
        const Eigen::VectorXd g = ops.grad(y);
        prev = eta;
        for (Eigen::Index j = 0; j <= p; ++j) eta(j) = soft(y(j) - step * g(j), step * kappa);
        // Restart the momentum whenever it points uphill.
        if ((y - eta).dot(eta - prev) > 0.0) {
            t = 1.0;
            y = eta;
        } else {
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = eta + ((t - 1.0) / tn) * (eta - prev);
            t = tn;
        }
        if (it % 10 == 0 || it == opt.max_iter) {
            double viol = 0.0, gap = 0.0;
            status(eta, viol, gap);
            const Eigen::VectorXd s = ops.ct(eta);
            const double primal = 0.25 * s.dot(sigma * s);
            res.duality_gap = gap;
            if (viol <= opt.feas_tol && gap <= opt.gap_tol * std::max(1.0, primal)) {
                res.converged = true;
                break;
            }
        }
    }
    res.b = -0.5 * ops.ct(eta);
    res.objective = res.b.dot(sigma * res.b);
    res.max_violation = projection_violation(sigma, w, lambda_n, res.b);
    return res;
}

}  // namespace hat
