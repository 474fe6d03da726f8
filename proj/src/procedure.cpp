#include "hat/procedure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hat {

std::string_view to_string(ThresholdFamily f) {
    switch (f) {
        case ThresholdFamily::independent: return "independent";
        case ThresholdFamily::independent_shifted: return "independent-shifted";
        case ThresholdFamily::reshaped: return "reshaped";
        case ThresholdFamily::reshaped_shifted: return "reshaped-shifted";
        case ThresholdFamily::lynch_guo: return "lg";
    }
    return "unknown";
}

ThresholdFamily parse_family(std::string_view s) {
    if (s == "independent") return ThresholdFamily::independent;
    if (s == "independent-shifted") return ThresholdFamily::independent_shifted;
    if (s == "reshaped") return ThresholdFamily::reshaped;
    if (s == "reshaped-shifted") return ThresholdFamily::reshaped_shifted;
    if (s == "lg" || s == "lynch-guo") return ThresholdFamily::lynch_guo;
    throw std::invalid_argument("unknown threshold family '" + std::string(s) + "'");
}

bool is_shifted(ThresholdFamily f) {
    return f == ThresholdFamily::independent_shifted || f == ThresholdFamily::reshaped_shifted;
}

void HatConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(epsilon0 >= 0.0 && epsilon0 < alpha)) throw std::invalid_argument("epsilon0 must lie in [0, alpha)");
    if (epsilon0 > 0.0 && !is_shifted(family)) {
        throw std::invalid_argument("epsilon0 only applies to the shifted threshold families");
    }
}

TreeShape TreeShape::of(const Tree& t) {
    return {t.n_leaves(), t.max_degree(), t.min_degree(), t.max_depth()};
}

double partial_harmonic(std::int64_t lo, std::int64_t hi) {
    double s = 0.0;
    // Smallest terms first.
    for (std::int64_t m = hi; m >= lo; --m) s += 1.0 / static_cast<double>(m);
    return s;
}

double harmonic_correction(const DepthState& s, const TreeShape& shape, std::int64_t r) {
    const std::int64_t lo = s.prev_splits + r + 1;
    const std::int64_t hi = shape.p - 1 - (s.degree_sum - s.n_internal - r);
    return 1.0 + partial_harmonic(lo, hi);
}

double threshold_independent(bool parent_rejected, int n_leaves, std::int64_t r,
                             const DepthState& s, const TreeShape& shape, double alpha) {
    if (!parent_rejected) return 0.0;
    const double delta = shape.max_degree;
    const double mass = alpha * n_leaves * static_cast<double>(s.prev_splits + r);
    const double hbar = harmonic_correction(s, shape, r);
    const double level = mass / (shape.p * (1.0 - 1.0 / (delta * delta)) * hbar + mass) / delta;
    return std::clamp(level, 0.0, 1.0);
}

double reshape_beta(std::int64_t x, const DepthState& s, const TreeShape& shape, ReshapeBound bound) {
    const std::int64_t lo = static_cast<std::int64_t>(s.depth) * (shape.min_degree - 1);
    const std::int64_t hi =
        bound == ReshapeBound::depth_degree_sum ? s.degree_sum : s.parent_degree_sum - 1;
    if (lo > hi || lo < 1) {
        throw DegenerateReshaping("reshaping range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                  "] is empty at depth " + std::to_string(s.depth));
    }
    return static_cast<double>(x) / partial_harmonic(lo, hi);
}

double threshold_reshaped(bool parent_rejected, int n_leaves, std::int64_t r, const DepthState& s,
                          const TreeShape& shape, double alpha, ReshapeBound bound) {
    if (!parent_rejected) return 0.0;
    const double delta = shape.max_degree;
    const double beta = reshape_beta(s.prev_splits + r, s, shape, bound);
    const double level = alpha * n_leaves * beta / (shape.p * (delta - 1.0 / delta) * (shape.max_depth - 1));
    return std::clamp(level, 0.0, 1.0);
}

double threshold_shifted(double base, double epsilon0) {
    return std::max(base - epsilon0, 0.0);
}

PrunedCounts PrunedCounts::of(const Tree& t) {
    PrunedCounts c;
    c.leaves.assign(t.size(), 0);
    c.size.assign(t.size(), 0);
    for (NodeId u = t.size() - 1; u >= 0; --u) {
        if (t.is_leaf(u)) continue;
        c.size[u] = 1;
        bool only_leaf_children = true;
        for (NodeId v : t.children(u)) {
            c.size[u] += c.size[v];
            c.leaves[u] += c.leaves[v];
            only_leaf_children = only_leaf_children && t.is_leaf(v);
        }
        if (only_leaf_children) c.leaves[u] = 1;
    }
    return c;
}

double threshold_lg(bool parent_rejected, int pruned_leaves, int pruned_size, int pruned_root_leaves,
                    std::int64_t prev_splits, std::int64_t r, double alpha) {
    if (!parent_rejected) return 0.0;
    if (pruned_size < 1 || pruned_root_leaves < 1) {
        throw std::invalid_argument("node is not part of the pruned tree");
    }
    const double level = alpha * (static_cast<double>(pruned_leaves) / pruned_root_leaves) *
                         static_cast<double>(pruned_size + prev_splits + r - 1) / pruned_size;
    return std::clamp(level, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

DepthProblem::DepthProblem(const Tree& t, const PValueAssignment& pv, const HatConfig& cfg, int depth,
                           std::int64_t prev_splits, const NodeMask& rejected)
    : cfg_(cfg), shape_(TreeShape::of(t)) {
    const auto level = t.internal_nodes_at_depth(depth);
    nodes_.assign(level.begin(), level.end());
    state_.depth = depth;
    state_.prev_splits = prev_splits;
    state_.n_internal = static_cast<std::int64_t>(nodes_.size());
    for (NodeId u : nodes_) state_.degree_sum += t.degree(u);
    if (depth > 1) {
        for (NodeId u : t.internal_nodes_at_depth(depth - 1)) state_.parent_degree_sum += t.degree(u);
    }

    const bool lg = cfg.family == ThresholdFamily::lynch_guo;
    PrunedCounts pruned;
    if (lg) {
        pruned = PrunedCounts::of(t);
        pruned_root_leaves_ = pruned.leaves[t.root()];
    }
    for (NodeId u : nodes_) {
        const auto par = t.parent(u);
        parent_rejected_.push_back(par && rejected[*par]);
        pvalues_.push_back(pv.at(u));
        n_leaves_.push_back(t.leaves_under(u).len);
        weights_.push_back(lg ? 1 : t.degree(u) - 1);
        if (lg) {
            pruned_leaves_.push_back(pruned.leaves[u]);
            pruned_size_.push_back(pruned.size[u]);
        }
    }
    max_r_ = lg ? state_.n_internal : state_.degree_sum - state_.n_internal;

    if (cfg.family == ThresholdFamily::reshaped || cfg.family == ThresholdFamily::reshaped_shifted) {
        try {
            reshape_beta(1, state_, shape_, cfg.reshape_bound);
        } catch (const DegenerateReshaping&) {
            degenerate_ = !nodes_.empty();
        }
    }
}

bool DepthProblem::any_parent_rejected() const {
    return std::find(parent_rejected_.begin(), parent_rejected_.end(), true) != parent_rejected_.end();
}

double DepthProblem::threshold(std::size_t k, std::int64_t r) const {
    if (degenerate_) return 0.0;
    const bool par = parent_rejected_[k];
    switch (cfg_.family) {
        case ThresholdFamily::independent:
            return threshold_independent(par, n_leaves_[k], r, state_, shape_, cfg_.alpha);
        case ThresholdFamily::independent_shifted:
            return threshold_shifted(threshold_independent(par, n_leaves_[k], r, state_, shape_, cfg_.alpha),
                                     cfg_.epsilon0);
        case ThresholdFamily::reshaped:
            return threshold_reshaped(par, n_leaves_[k], r, state_, shape_, cfg_.alpha, cfg_.reshape_bound);
        case ThresholdFamily::reshaped_shifted:
            return threshold_shifted(
                threshold_reshaped(par, n_leaves_[k], r, state_, shape_, cfg_.alpha, cfg_.reshape_bound),
                cfg_.epsilon0);
        case ThresholdFamily::lynch_guo:
            return threshold_lg(par, pruned_leaves_[k], pruned_size_[k], pruned_root_leaves_,
                                state_.prev_splits, r, cfg_.alpha);
    }
    return 0.0;
}

std::vector<double> DepthProblem::thresholds(std::int64_t r) const {
    std::vector<double> out(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) out[k] = threshold(k, r);
    return out;
}

std::int64_t DepthProblem::splits(std::int64_t r) const {
    std::int64_t total = 0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        if (!parent_rejected_[k]) continue;
        const double level = threshold(k, r);
        if (level > 0.0 && pvalues_[k] <= level) total += weights_[k];
    }
    return total;
}

std::int64_t DepthProblem::fixed_point() const {
    for (std::int64_t r = max_r_; r > 0; --r) {
        if (r <= splits(r)) return r;
    }
    return 0;
}

// ---------------------------------------------------------------------------

HatResult run_hat(const Tree& t, const PValueAssignment& pv, const HatConfig& cfg) {
    cfg.validate();
    if (pv.size() != t.size()) throw std::invalid_argument("p-value table does not match the tree");
    pv.validate(t);

    const int depth_max = t.max_depth();
    const bool lg = cfg.family == ThresholdFamily::lynch_guo;
    RejectionTree rt;
    rt.rejected.assign(t.size(), false);
    rt.r_star.assign(depth_max + 1, 0);
    rt.cumulative.assign(depth_max + 1, 0);
    rt.threshold.assign(t.size(), std::numeric_limits<double>::quiet_NaN());

    rt.rejected[t.root()] = true;
    rt.cumulative[1] = lg ? 1 : t.degree(t.root()) - 1;

    for (int d = 2; d <= depth_max; ++d) {
        DepthProblem problem(t, pv, cfg, d, rt.cumulative[d - 1], rt.rejected);
        if (!problem.any_parent_rejected()) break;
        if (problem.degenerate()) rt.degenerate_depths.push_back(d);

        const std::int64_t r = problem.fixed_point();
        const auto nodes = problem.nodes();
        std::int64_t realized = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const NodeId u = nodes[k];
            const double level = problem.threshold(k, r);
            rt.threshold[u] = level;
            const auto par = t.parent(u);
            if (par && rt.rejected[*par] && level > 0.0 && pv[u] <= level) {
                rt.rejected[u] = true;
                realized += problem.weight(k);
            }
        }
        if (realized != r) {
            throw InvariantViolation("self-consistency failed at depth " + std::to_string(d) + ": " +
                                     std::to_string(realized) + " splits for r* = " + std::to_string(r));
        }
        rt.r_star[d] = r;
        rt.cumulative[d] = rt.cumulative[d - 1] + r;
        rt.last_depth = d;
    }
    for (int d = rt.last_depth + 1; d <= depth_max; ++d) rt.cumulative[d] = rt.cumulative[rt.last_depth];

    HatResult out;
    out.partition = rejection_to_partition(t, rt.rejected);
    out.rejection = std::move(rt);
    return out;
}

}  // namespace hat
