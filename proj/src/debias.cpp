#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "hat/regression.hpp"
#include "hat/special.hpp"

namespace hat {

double centering_quadratic(const Eigen::Ref<const Eigen::VectorXd>& theta) {
    if (theta.size() == 0) throw std::invalid_argument("centering needs a non-empty vector");
    const double mean = theta.mean();
    return (theta.array() - mean).square().sum();
}

Eigen::VectorXd projection_target(const Tree& t, const Eigen::VectorXd& theta, NodeId u) {
    if (theta.size() != t.n_leaves()) throw std::invalid_argument("theta does not match the tree");
    const auto r = t.leaves_under(u);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(theta.size());
    const auto slice = theta.segment(r.start, r.len);
    w.segment(r.start, r.len) = slice.array() - slice.mean();
    return w;
}

double debiased_pvalue(double q_debiased, double variance) {
    if (!(variance > 0.0)) throw std::invalid_argument("variance must be positive");
    const double z = std::fabs(q_debiased) / std::sqrt(variance);
    return std::min(1.0, 2.0 * normal_cdf(-z));
}

DebiasResult debias_node(const RegressionData& d, const Eigen::MatrixXd& sigma_matrix, const Eigen::VectorXd& theta,
                         const Tree& t, NodeId u, double sigma_hat, double tau, double lambda_n,
                         const ProjectionOptions& opt) {
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (!(sigma_hat >= 0.0)) throw std::invalid_argument("sigma_hat must be >= 0");
    const double n = d.n();
    const auto r = t.leaves_under(u);

    DebiasResult res;
    res.node = u;
    res.tau = tau;
    res.lambda_n = lambda_n;
    res.q_hat = centering_quadratic(theta.segment(r.start, r.len));
    const Eigen::VectorXd w = projection_target(t, theta, u);
    if (w.norm() == 0.0) {
        res.b = Eigen::VectorXd::Zero(d.p());
    } else {
        const ProjectionResult pr = solve_projection(sigma_matrix, w, lambda_n, opt);
        res.b = pr.b;
        res.converged = pr.converged;
    }
    const Eigen::VectorXd resid = d.y - d.X * theta;
    res.q_debiased = res.q_hat + (2.0 / n) * (d.X * res.b).dot(resid);
    const double quad = std::max(0.0, res.b.dot(sigma_matrix * res.b));
    res.variance = 4.0 * sigma_hat * sigma_hat / n * quad + tau / n;
    res.pvalue = debiased_pvalue(res.q_debiased, res.variance);
    return res;
}

RegressionPValues node_pvalues_regression(const RegressionData& d, const Tree& t, const RegressionPValueConfig& cfg) {
    d.validate();
    if (d.p() != t.n_leaves()) throw std::invalid_argument("design width does not match the number of leaves");
    if (!(cfg.lambda_n_c > 0.0)) throw std::invalid_argument("lambda_n constant must be positive");

    const Eigen::MatrixXd A = build_expansion(t);
    const auto grid = cfg.grid.empty() ? default_rare_grid(d) : cfg.grid;

    RegressionPValues out;
    out.cv = cross_validate_rare(d, A, grid, cfg.folds, cfg.seed, cfg.admm);
    out.fit = fit_rare(d, A, out.cv.best.lambda, out.cv.best.nu, cfg.admm);
    if (cfg.sigma_design == NoiseDesign::expanded) {
        RegressionData expanded{d.X * A, d.y};
        out.sigma = scaled_lasso_sigma(expanded, cfg.sigma_penalty);
    } else {
        out.sigma = scaled_lasso_sigma(d, cfg.sigma_penalty);
    }
    out.lambda_n = cfg.lambda_n_c * std::sqrt(std::log(static_cast<double>(d.p())) / d.n());

    const Eigen::MatrixXd sigma_matrix = d.X.transpose() * d.X / static_cast<double>(d.n());
    const std::span<const NodeId> nodes = t.internal_nodes();
    out.nodes.resize(nodes.size());
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t k = begin; k < nodes.size(); k += stride) {
            out.nodes[k] = debias_node(d, sigma_matrix, out.fit.theta, t, nodes[k], out.sigma.sigma, cfg.tau,
                                       out.lambda_n, cfg.projection);
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, std::max<std::size_t>(nodes.size(), 1));
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
        for (auto& th : pool) th.join();
    }

    out.pvalues = PValueAssignment(t.size(), PValueSource::debiased);
    out.converged = out.fit.converged && out.sigma.converged;
    for (const auto& r : out.nodes) {
        out.pvalues.set(r.node, r.pvalue);
        out.converged = out.converged && r.converged;
    }
    return out;
}

}  // namespace hat
