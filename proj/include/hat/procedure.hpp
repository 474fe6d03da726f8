#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "hat/metrics.hpp"
#include "hat/pvalue_assignment.hpp"
#include "hat/tree.hpp"

namespace hat {

/// Threshold function used at each depth.
///
/// lynch_guo is the hierarchical-FDR step-up baseline. It has no false split
/// rate guarantee on non-binary trees.
enum class ThresholdFamily {
    independent,          // harmonic-corrected step-up, independent p-values
    independent_shifted,  // same, minus epsilon0 for approximately valid p-values
    reshaped,             // reshaped step-up, arbitrary dependence
    reshaped_shifted,     // same, minus epsilon0
    lynch_guo,
};

std::string_view to_string(ThresholdFamily f);
/// Accepts "independent", "independent-shifted", "reshaped",
/// "reshaped-shifted", "lg" (or "lynch-guo").
ThresholdFamily parse_family(std::string_view s);
bool is_shifted(ThresholdFamily f);

/// Upper summation limit of the reshaping normaliser. `depth_degree_sum`
/// sums degrees over the internal nodes at the current depth;
/// `parent_depth_degree_sum` uses the previous depth's degree sum minus one.
enum class ReshapeBound { depth_degree_sum, parent_depth_degree_sum };

struct HatConfig {
    double alpha = 0.2;
    ThresholdFamily family = ThresholdFamily::independent;
    double epsilon0 = 0.0;  // shifted families only
    ReshapeBound reshape_bound = ReshapeBound::depth_degree_sum;

    /// alpha in (0,1); epsilon0 in [0, alpha); epsilon0 > 0 only for shifted
    /// families.
    void validate() const;
};

/// Whole-tree constants entering the thresholds.
struct TreeShape {
    int p = 0;           // leaves
    int max_degree = 0;  // over internal nodes
    int min_degree = 0;
    int max_depth = 0;

    static TreeShape of(const Tree& t);
};

/// Per-depth quantities shared by every node tested at that depth.
struct DepthState {
    int depth = 2;
    std::int64_t prev_splits = 0;       // R^{1:(d-1)}
    std::int64_t degree_sum = 0;        // sum of degrees over internal nodes at this depth
    std::int64_t n_internal = 0;        // number of internal nodes at this depth
    std::int64_t parent_degree_sum = 0; // same sum one depth up
};

/// sum_{m=lo}^{hi} 1/m, zero when lo > hi.
double partial_harmonic(std::int64_t lo, std::int64_t hi);

/// 1 + sum over m from prev_splits + r + 1 to p - 1 - (degree_sum - n_internal - r).
double harmonic_correction(const DepthState& s, const TreeShape& shape, std::int64_t r);

/// Independent-p-value threshold, 0 when the parent is unrejected.
double threshold_independent(bool parent_rejected, int n_leaves, std::int64_t r,
                             const DepthState& s, const TreeShape& shape, double alpha);

class DegenerateReshaping : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Reshaping function: x divided by the harmonic sum over
/// [depth * (min_degree - 1), upper]. Throws DegenerateReshaping when the
/// range is empty.
double reshape_beta(std::int64_t x, const DepthState& s, const TreeShape& shape, ReshapeBound bound);

/// Dependence-robust threshold, 0 when the parent is unrejected.
double threshold_reshaped(bool parent_rejected, int n_leaves, std::int64_t r, const DepthState& s,
                          const TreeShape& shape, double alpha, ReshapeBound bound);

/// max(base - epsilon0, 0).
double threshold_shifted(double base, double epsilon0);

/// Counts on the tree with its leaves removed, used by the Lynch-Guo baseline.
struct PrunedCounts {
    std::vector<int> leaves;  // leaves of the pruned tree below u (internal nodes with only leaf children)
    std::vector<int> size;    // nodes of the pruned subtree rooted at u, u included

    static PrunedCounts of(const Tree& t);
};

/// alpha * (leaves_u / leaves_root) * (m_u + prev_splits + r - 1) / m_u,
/// clamped to [0, 1]; 0 when the parent is unrejected.
double threshold_lg(bool parent_rejected, int pruned_leaves, int pruned_size, int pruned_root_leaves,
                    std::int64_t prev_splits, std::int64_t r, double alpha);

/// The step-up problem at a single depth given the rejections above it.
class DepthProblem {
public:
    DepthProblem(const Tree& t, const PValueAssignment& pv, const HatConfig& cfg, int depth,
                 std::int64_t prev_splits, const NodeMask& rejected);

    std::span<const NodeId> nodes() const { return nodes_; }
    bool any_parent_rejected() const;
    /// True when the reshaped family cannot be evaluated at this depth; all
    /// thresholds are then 0.
    bool degenerate() const { return degenerate_; }

    /// Threshold of the k-th node of nodes() at step-up index r.
    double threshold(std::size_t k, std::int64_t r) const;
    /// Thresholds of all nodes at r.
    std::vector<double> thresholds(std::int64_t r) const;
    /// Splits contributed by the nodes passing their thresholds at r.
    std::int64_t splits(std::int64_t r) const;
    std::int64_t max_r() const { return max_r_; }
    /// Largest r in [0, max_r] with r <= splits(r).
    std::int64_t fixed_point() const;
    /// Weight of a rejected node: degree - 1, or 1 for Lynch-Guo.
    int weight(std::size_t k) const { return weights_[k]; }

private:
    HatConfig cfg_;
    TreeShape shape_;
    DepthState state_;
    std::vector<NodeId> nodes_;
    std::vector<bool> parent_rejected_;
    std::vector<double> pvalues_;
    std::vector<int> n_leaves_;
    std::vector<int> weights_;
    std::vector<int> pruned_leaves_;
    std::vector<int> pruned_size_;
    int pruned_root_leaves_ = 0;
    std::int64_t max_r_ = 0;
    bool degenerate_ = false;
};

class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct RejectionTree {
    NodeMask rejected;
    /// Indexed by depth (entries 0 and 1 unused for r_star).
    std::vector<std::int64_t> r_star;
    /// R^{1:d}, indexed by depth; cumulative[1] is the root's contribution.
    std::vector<std::int64_t> cumulative;
    /// Final threshold of every tested node; NaN for nodes never tested.
    std::vector<double> threshold;
    /// Last depth at which nodes were tested (1 if none).
    int last_depth = 1;
    /// Depths whose reshaping range was empty.
    std::vector<int> degenerate_depths;
};

struct HatResult {
    RejectionTree rejection;
    Partition partition;
};

/// Top-down, depth-by-depth step-up testing. The root is rejected at
/// initialization and its p-value is never compared to a threshold.
HatResult run_hat(const Tree& t, const PValueAssignment& pv, const HatConfig& cfg);

}  // namespace hat
