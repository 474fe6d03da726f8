#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hat/metrics.hpp"
#include "hat/procedure.hpp"
#include "hat/pvalues.hpp"
#include "hat/regression.hpp"
#include "hat/rng.hpp"
#include "hat/tree.hpp"

namespace hat {

/// Binary tree from single-linkage clustering of p Unif[0,1] points.
/// `height[u]` is the merge distance of internal node u (0 for leaves);
/// `points` are the draws in leaf order.
struct Dendrogram {
    Tree tree;
    std::vector<double> height;
    std::vector<double> points;
};

Dendrogram gen_binary_tree(int p, std::uint64_t seed);

/// Single-linkage dendrogram of given 1-D points. Merges follow the sorted
/// adjacent gaps in ascending order, ties broken by position.
Dendrogram single_linkage_1d(std::span<const double> points);

struct TreeCut {
    std::vector<NodeId> nodes;  // ascending id, i.e. leaf order
    bool exact = true;          // false when exactly K groups was not attainable
};

/// K disjoint subtrees covering all leaves. With merge heights, the K - 1
/// highest merges are undone (ties by smaller id). Without heights, the
/// frontier node with the tallest subtree (ties by smaller id) is split until
/// at least K subtrees exist.
TreeCut cut_tree(const Tree& t, int K, const std::vector<double>* height = nullptr);

/// Root of degree 5 whose first k children each have 10 leaf children and
/// whose other children are leaves; p = 5 + 9k.
Tree gen_nonbinary_tree(int k);

/// Draw from Beta(1, b) by inversion.
double sample_beta_1(Philox& rng, double b);

/// Internal nodes in or below the cut: Unif(0,1). Strict ancestors of the
/// cut: Beta(1, beta_shape).
PValueAssignment gen_idealized_pvalues(const Tree& t, std::span<const NodeId> bstar, Philox& rng,
                                       double beta_shape = 60.0);

/// Maximal nodes whose leaf coefficients are all equal.
std::vector<NodeId> constant_groups(const Tree& t, const Eigen::VectorXd& theta);

/// Mark of every internal node that is a strict ancestor of some cut node.
NodeMask non_null_nodes(const Tree& t, std::span<const NodeId> bstar);

struct MeansScenario {
    Tree tree;
    std::vector<NodeId> bstar;
    Partition truth;
    Eigen::VectorXd theta;  // leaf order
    double sigma = 0.3;
};

/// Balanced tree (3-regular, 243 leaves by default) cut into K groups with
/// group means +-Unif(1, 1.5).
MeansScenario gen_means_scenario(int K, double sigma, std::uint64_t seed, int degree = 3, int depth = 6);
LeafObservations draw_means_observations(const MeansScenario& s, Philox& rng);

struct RegressionScenarioParams {
    int K = 9;
    double beta = 0.6;   // fraction of groups with a nonzero coefficient
    double rho = 0.2;    // Bernoulli density of the design
    int n = 100;
    double c_sigma = 0.6;
    int degree = 3;
    int depth = 6;
};

struct RegressionScenario {
    Tree tree;
    std::vector<NodeId> design_bstar;  // cut used to draw the coefficients
    std::vector<NodeId> bstar;         // maximal constant groups of theta
    Partition truth;
    RegressionData data;
    Eigen::VectorXd theta;
    double sigma = 0.0;
};

/// Rare-feature regression design: X = Xt .* W with Xt standard normal and W
/// Bernoulli(rho); the first round((1 - beta) K) group coefficients are zero,
/// the rest N(0, 0.5^2); sigma = c |X theta| / sqrt(n).
RegressionScenario gen_regression_scenario(const RegressionScenarioParams& params, std::uint64_t seed);
/// Fresh response y = X theta + N(0, sigma^2) on the fixed design.
Eigen::VectorXd draw_regression_response(const RegressionScenario& s, Philox& rng);

enum class ScenarioKind { idealized_binary, idealized_nonbinary, means_regular, regression_rare };
std::string_view to_string(ScenarioKind k);
ScenarioKind parse_scenario_kind(std::string_view s);

struct Scenario {
    ScenarioKind kind = ScenarioKind::idealized_binary;
    int p = 1000;               // idealized-binary
    int K = 500;                // all kinds except idealized-nonbinary (fixed at 5)
    int nonbinary_k = 1;        // idealized-nonbinary internal children
    std::vector<double> alphas{0.1, 0.2, 0.3};
    std::vector<ThresholdFamily> families{ThresholdFamily::independent, ThresholdFamily::lynch_guo};
    double epsilon0 = 0.0;
    int reps = 100;
    double beta_shape = 60.0;   // idealized non-null Beta(1, b)
    double sigma = 0.3;         // means noise level
    int tree_depth = 6;         // means: depth of the 3-regular tree
    bool simes = true;          // means: Simes-combine the ANOVA p-values
    RegressionScenarioParams regression;
    RegressionPValueConfig regression_cfg;
    std::uint64_t seed = 1;
    int threads = 1;
    bool keep_bstar_pvalues = false;
    /// Called after each finished replicate with (done, total); serialized.
    std::function<void(int, int)> progress;

    void validate() const;
};

struct McCell {
    ThresholdFamily family = ThresholdFamily::independent;
    double alpha = 0.0;
    double fsr = 0.0;
    double fsr_se = 0.0;
    double power = 0.0;
    double power_se = 0.0;
    int reps = 0;
};

struct McResult {
    std::vector<McCell> cells;  // family-major, then alpha, in scenario order
    int p = 0;
    int K = 0;
    int nonconverged = 0;       // regression replicates with a solver flag
    /// Per replicate, p-values of the internal cut nodes (when requested).
    std::vector<std::vector<double>> bstar_pvalues;
};

/// Replicate r draws from stream replicate_stream(r); scenario-level draws use
/// kScenarioStream. Results are reduced in replicate order and do not depend
/// on the thread count.
McResult run_monte_carlo(const Scenario& s);

}  // namespace hat
