#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "hat/sim.hpp"

using hat::NodeId;
using hat::Philox;
using hat::Tree;

namespace {

using LeafSet = std::set<std::string>;

LeafSet leaf_set(const Tree& t, NodeId u) {
    LeafSet out;
    for (NodeId v : t.leaves_in(t.leaves_under(u))) out.insert(t.label(v));
    return out;
}

// O(p^3) agglomeration: repeatedly merge the two clusters at the smallest
// single-linkage distance. Returns every merged cluster with its height.
std::map<LeafSet, double> brute_force_merges(const std::vector<double>& x) {
    std::vector<std::vector<int>> clusters;
    for (int i = 0; i < static_cast<int>(x.size()); ++i) clusters.push_back({i});
    std::map<LeafSet, double> merges;
    while (clusters.size() > 1) {
        double best = INFINITY;
        std::size_t ba = 0, bb = 0;
        for (std::size_t a = 0; a < clusters.size(); ++a) {
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                for (int i : clusters[a]) {
                    for (int j : clusters[b]) {
                        const double dist = std::fabs(x[i] - x[j]);
                        if (dist < best) {
                            best = dist;
                            ba = a;
                            bb = b;
                        }
                    }
                }
            }
        }
        clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
        LeafSet s;
        for (int i : clusters[ba]) s.insert("l" + std::to_string(i + 1));
        merges[s] = best;
    }
    return merges;
}

// Height cut of a 1-D single-linkage tree: split the sorted points at the
// K - 1 widest gaps.
std::set<LeafSet> gap_cut(const std::vector<double>& x, int K) {
    std::vector<int> order(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
    std::vector<std::pair<double, int>> gaps;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) gaps.push_back({x[order[i + 1]] - x[order[i]], static_cast<int>(i)});
    std::sort(gaps.rbegin(), gaps.rend());
    std::set<int> breaks;
    for (int k = 0; k < K - 1; ++k) breaks.insert(gaps[k].second);
    std::set<LeafSet> out;
    LeafSet cur;
    for (std::size_t i = 0; i < order.size(); ++i) {
        cur.insert("l" + std::to_string(order[i] + 1));
        if (breaks.count(static_cast<int>(i)) || i + 1 == order.size()) {
            out.insert(cur);
            cur.clear();
        }
    }
    return out;
}

std::vector<double> uniform_points(std::uint64_t seed, int p) {
    Philox rng(seed, hat::kScenarioStream);
    std::vector<double> x(p);
    for (double& v : x) v = rng.uniform();
    return x;
}

}  // namespace

TEST_CASE("philox known answers") {
    using B = Philox::Block;
    CHECK(Philox::block(0, B{0, 0, 0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox::block(0xffffffffffffffffULL, B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}) ==
          B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox::block(0x299f31d0a4093822ULL, B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}) ==
          B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});

    Philox a(0, 0);
    CHECK(a() == 0x6627e8d5);
    CHECK(a() == 0xe169c58d);
}

TEST_CASE("philox streams and skipping") {
    Philox a(7, 3), b(7, 3), c(7, 4);
    std::vector<std::uint32_t> va, vc;
    for (int i = 0; i < 100; ++i) {
        va.push_back(a());
        vc.push_back(c());
    }
    CHECK(va != vc);
    b.discard(37);
    for (int i = 0; i < 37; ++i) (void)Philox{};
    Philox d(7, 3);
    for (int i = 0; i < 37; ++i) d();
    CHECK(b() == d());
    CHECK(b.stream() == 3);
    CHECK(b.seed() == 7);
    double lo = 1, hi = 0;
    Philox u(1);
    for (int i = 0; i < 100000; ++i) {
        const double x = u.uniform();
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(lo < 1e-3);
    CHECK(hi > 1 - 1e-3);
}

TEST_CASE("binary trees from single linkage") {
    const auto two = hat::gen_binary_tree(2, 1);
    CHECK(two.tree.size() == 3);
    CHECK(two.tree.degree(0) == 2);

    const auto big = hat::gen_binary_tree(1000, 9);
    CHECK(big.tree.n_leaves() == 1000);
    CHECK(big.tree.internal_nodes().size() == 999);
    for (NodeId u : big.tree.internal_nodes()) CHECK(big.tree.degree(u) == 2);
    const auto again = hat::gen_binary_tree(1000, 9);
    CHECK(hat::to_newick(again.tree) == hat::to_newick(big.tree));
    CHECK(again.height == big.height);
    CHECK(hat::to_newick(hat::gen_binary_tree(1000, 10).tree) != hat::to_newick(big.tree));
    CHECK_THROWS_AS(hat::gen_binary_tree(1, 1), std::invalid_argument);
    // Leaf order follows the sorted points.
    CHECK(std::is_sorted(big.points.begin(), big.points.end()));
}

TEST_CASE("single linkage equals brute-force agglomeration") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const int p = 5 + static_cast<int>(seed) * 2;
        const auto x = uniform_points(seed, p);
        const auto dg = hat::single_linkage_1d(x);
        const auto expect = brute_force_merges(x);
        std::map<LeafSet, double> got;
        for (NodeId u : dg.tree.internal_nodes()) got[leaf_set(dg.tree, u)] = dg.height[u];
        CHECK(got == expect);
        // Merge heights grow toward the root.
        for (NodeId u : dg.tree.internal_nodes()) {
            if (u != dg.tree.root()) CHECK(dg.height[u] <= dg.height[*dg.tree.parent(u)]);
        }
    }
}

TEST_CASE("cutting dendrograms") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const int p = 40;
        const auto x = uniform_points(seed, p);
        const auto dg = hat::single_linkage_1d(x);
        for (int K : {1, 2, 5, 17, 40}) {
            const auto cut = hat::cut_tree(dg.tree, K, &dg.height);
            CHECK(cut.exact);
            CHECK(static_cast<int>(cut.nodes.size()) == K);
            std::set<LeafSet> got;
            for (NodeId b : cut.nodes) got.insert(leaf_set(dg.tree, b));
            CHECK(got == gap_cut(x, K));
        }
    }
    const auto dg = hat::gen_binary_tree(10, 3);
    CHECK(hat::cut_tree(dg.tree, 1, &dg.height).nodes == std::vector<NodeId>{0});
    const auto all = hat::cut_tree(dg.tree, 10, &dg.height);
    for (NodeId b : all.nodes) CHECK(dg.tree.is_leaf(b));
    CHECK_THROWS_AS(hat::cut_tree(dg.tree, 0), std::invalid_argument);
    CHECK_THROWS_AS(hat::cut_tree(dg.tree, 11), std::invalid_argument);

    // Tied heights at the cut are flagged.
    const std::vector<double> tied{0.0, 0.1, 0.2, 0.3};
    const auto tdg = hat::single_linkage_1d(tied);
    CHECK_FALSE(hat::cut_tree(tdg.tree, 2, &tdg.height).exact);
}

TEST_CASE("cutting regular trees without heights") {
    const Tree t = Tree::regular(3, 6);
    auto cut = hat::cut_tree(t, 9);
    CHECK(cut.exact);
    REQUIRE(cut.nodes.size() == 9);
    for (NodeId b : cut.nodes) CHECK(t.depth(b) == 3);
    cut = hat::cut_tree(t, 27);
    CHECK(cut.nodes.size() == 27);
    // 10 groups are not reachable: splitting one more node gives 11.
    cut = hat::cut_tree(t, 10);
    CHECK_FALSE(cut.exact);
    CHECK(cut.nodes.size() == 11);
    CHECK(cut.nodes.front() == t.internal_nodes_at_depth(4)[0]);
    CHECK(hat::cut_tree(t, 243).nodes.size() == 243);
    CHECK(hat::cut_tree(t, 1).nodes == std::vector<NodeId>{0});
}

TEST_CASE("non-binary trees") {
    CHECK(hat::gen_nonbinary_tree(1).n_leaves() == 14);
    CHECK(hat::gen_nonbinary_tree(2).n_leaves() == 23);
    CHECK(hat::gen_nonbinary_tree(3).n_leaves() == 32);
    CHECK(hat::gen_nonbinary_tree(4).n_leaves() == 41);
    const Tree t = hat::gen_nonbinary_tree(2);
    CHECK(t.degree(0) == 5);
    CHECK(t.internal_nodes().size() == 3);
    for (NodeId u : t.internal_nodes()) {
        if (u != 0) CHECK(t.degree(u) == 10);
    }
    CHECK_THROWS_AS(hat::gen_nonbinary_tree(0), std::invalid_argument);
    CHECK_THROWS_AS(hat::gen_nonbinary_tree(5), std::invalid_argument);
}

TEST_CASE("idealized p-values") {
    const Tree t = Tree::regular(2, 5);
    Philox rng(4, 1);
    // K = 1: everything null.
    const std::vector<NodeId> root{0};
    double sum_null = 0;
    int count = 0;
    for (int k = 0; k < 2000; ++k) {
        const auto pv = hat::gen_idealized_pvalues(t, root, rng);
        for (NodeId u : t.internal_nodes()) {
            sum_null += pv[u];
            ++count;
        }
    }
    CHECK(sum_null / count == doctest::Approx(0.5).epsilon(0.01));

    // All leaves: everything non-null.
    std::vector<NodeId> leaves(t.leaf_order().begin(), t.leaf_order().end());
    double sum_alt = 0;
    count = 0;
    for (int k = 0; k < 2000; ++k) {
        const auto pv = hat::gen_idealized_pvalues(t, leaves, rng);
        for (NodeId u : t.internal_nodes()) {
            sum_alt += pv[u];
            ++count;
        }
    }
    CHECK(sum_alt / count < 0.02);
}

TEST_CASE("beta(1, 60) sampler mean") {
    Philox rng(11, 2);
    const int n = 100000;
    double s = 0;
    for (int i = 0; i < n; ++i) {
        const double x = hat::sample_beta_1(rng, 60.0);
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
        s += x;
    }
    const double mean = 1.0 / 61, sd = std::sqrt(60.0 / (61.0 * 61.0 * 62.0));
    CHECK(std::fabs(s / n - mean) <= 3 * sd / std::sqrt(static_cast<double>(n)));
    CHECK_THROWS_AS(hat::sample_beta_1(rng, 0.0), std::invalid_argument);
}

TEST_CASE("means scenario") {
    const auto s = hat::gen_means_scenario(9, 0.3, 5);
    CHECK(s.tree.n_leaves() == 243);
    CHECK(s.tree.max_depth() == 6);
    CHECK(s.bstar.size() == 9);
    CHECK(s.truth.size() == 9);
    for (double v : s.theta) {
        CHECK(std::fabs(v) >= 1.0);
        CHECK(std::fabs(v) <= 1.5);
    }

    // Noiseless: null nodes get p = 1, non-null nodes p = 0.
    const auto z = hat::gen_means_scenario(27, 0.0, 8);
    Philox rng(8, 1);
    const auto obs = hat::draw_means_observations(z, rng);
    const auto pv = hat::anova_pvalues(z.tree, obs);
    const auto alt = hat::non_null_nodes(z.tree, z.bstar);
    for (NodeId u : z.tree.internal_nodes()) CHECK(pv[u] == (alt[u] ? 0.0 : 1.0));
    CHECK_THROWS_AS(hat::gen_means_scenario(244, 0.3, 1), std::invalid_argument);
}

TEST_CASE("regression scenario") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto s = hat::gen_regression_scenario({}, seed);
        CHECK(s.data.n() == 100);
        CHECK(s.data.p() == 243);
        // Constant on every design branch.
        for (NodeId b : s.design_bstar) {
            const auto r = s.tree.leaves_under(b);
            const Eigen::VectorXd seg = s.theta.segment(r.start, r.len);
            CHECK(seg.maxCoeff() == seg.minCoeff());
        }
        // Zero groups come first.
        const auto r0 = s.tree.leaves_under(s.design_bstar[0]);
        CHECK(s.theta.segment(r0.start, r0.len).cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.sigma == doctest::Approx(0.6 * (s.data.X * s.theta).norm() / 10.0));
        const double density = (s.data.X.array() != 0.0).cast<double>().mean();
        CHECK(density == doctest::Approx(0.2).epsilon(0.1));
    }
    const auto null = hat::gen_regression_scenario({.beta = 0.0}, 3);
    CHECK(null.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(null.bstar == std::vector<NodeId>{0});
    const auto dense = hat::gen_regression_scenario({.rho = 1.0}, 3);
    CHECK((dense.data.X.array() != 0.0).all());
    CHECK_THROWS_AS(hat::gen_regression_scenario({.beta = 1.5}, 1), std::invalid_argument);
}

TEST_CASE("monte carlo driver") {
    hat::Scenario s;
    s.p = 100;
    s.K = 50;
    s.alphas = {0.2};
    s.families = {hat::ThresholdFamily::independent};
    s.reps = 0;
    CHECK_THROWS_AS(hat::run_monte_carlo(s), std::invalid_argument);
    s.reps = 200;
    s.seed = 3;
    const auto res = hat::run_monte_carlo(s);
    REQUIRE(res.cells.size() == 1);
    const auto& c = res.cells[0];
    CHECK(c.reps == 200);
    CHECK(c.fsr <= 0.2 + 3 * c.fsr_se);
    CHECK(c.fsr >= 0.0);
    CHECK(c.power <= 1.0);
    CHECK(res.p == 100);
    CHECK(res.K == 50);
}

TEST_CASE("monte carlo results do not depend on the thread count") {
    for (auto kind : {hat::ScenarioKind::idealized_binary, hat::ScenarioKind::means_regular}) {
        hat::Scenario s;
        s.kind = kind;
        s.p = 60;
        s.K = 9;
        s.tree_depth = 4;
        s.sigma = 2.0;
        s.families = {hat::ThresholdFamily::independent, hat::ThresholdFamily::reshaped,
                      hat::ThresholdFamily::lynch_guo};
        s.reps = 40;
        s.seed = 12;
        s.threads = 1;
        const auto a = hat::run_monte_carlo(s);
        s.threads = 4;
        int calls = 0;
        s.progress = [&](int done, int total) {
            ++calls;
            CHECK(done <= total);
        };
        const auto b = hat::run_monte_carlo(s);
        CHECK(calls == 40);
        REQUIRE(a.cells.size() == 9);
        for (std::size_t k = 0; k < a.cells.size(); ++k) {
            CHECK(a.cells[k].fsr == b.cells[k].fsr);
            CHECK(a.cells[k].power == b.cells[k].power);
            CHECK(a.cells[k].fsr_se == b.cells[k].fsr_se);
        }
        s.seed = 13;
        const auto c = hat::run_monte_carlo(s);
        bool differs = false;
        for (std::size_t k = 0; k < a.cells.size(); ++k) differs = differs || a.cells[k].power != c.cells[k].power || a.cells[k].fsr != c.cells[k].fsr;
        CHECK(differs);
    }
}

TEST_CASE("binary trees: false split proportion is false over total rejections") {
    std::mt19937_64 pick(1);
    for (int rep = 0; rep < 200; ++rep) {
        const auto dg = hat::gen_binary_tree(50, 100 + rep);
        const int K = std::uniform_int_distribution<int>(1, 50)(pick);
        const auto bstar = hat::cut_tree(dg.tree, K, &dg.height).nodes;
        Philox rng(100 + rep, 1);
        const auto pv = hat::gen_idealized_pvalues(dg.tree, bstar, rng);
        hat::HatConfig cfg;
        cfg.alpha = 0.3;
        const auto res = hat::run_hat(dg.tree, pv, cfg);
        const auto f = hat::false_rejections(dg.tree, res.rejection.rejected, bstar);
        std::int64_t n_false = 0, n_rej = 0;
        for (NodeId u = 0; u < dg.tree.size(); ++u) {
            n_false += f[u];
            n_rej += res.rejection.rejected[u];
        }
        const auto rates = hat::fsp_tpp_groups(hat::nodes_to_partition(dg.tree, bstar), res.partition);
        CHECK(rates.fsp == hat::Rational(n_false, n_rej));
    }
}

TEST_CASE("idealized null p-values are exchangeable") {
    // Permuting the null p-values among null nodes leaves the FSR unchanged
    // in distribution: compare the two estimates within Monte-Carlo error.
    const auto dg = hat::gen_binary_tree(80, 5);
    const auto bstar = hat::cut_tree(dg.tree, 20, &dg.height).nodes;
    const auto truth = hat::nodes_to_partition(dg.tree, bstar);
    const auto alt = hat::non_null_nodes(dg.tree, bstar);
    std::vector<NodeId> nulls;
    for (NodeId u : dg.tree.internal_nodes()) {
        if (!alt[u]) nulls.push_back(u);
    }
    hat::HatConfig cfg;
    cfg.alpha = 0.3;
    std::mt19937_64 shuf(2);
    const int reps = 3000;
    std::vector<double> diff;
    double a_sum = 0, b_sum = 0;
    for (int r = 0; r < reps; ++r) {
        Philox rng(5, hat::replicate_stream(r));
        auto pv = hat::gen_idealized_pvalues(dg.tree, bstar, rng);
        const double a = hat::fsp_tpp_groups(truth, hat::run_hat(dg.tree, pv, cfg).partition).fsp.to_double();
        std::vector<double> vals;
        for (NodeId u : nulls) vals.push_back(pv[u]);
        std::shuffle(vals.begin(), vals.end(), shuf);
        for (std::size_t k = 0; k < nulls.size(); ++k) pv.set(nulls[k], vals[k]);
        const double b = hat::fsp_tpp_groups(truth, hat::run_hat(dg.tree, pv, cfg).partition).fsp.to_double();
        a_sum += a;
        b_sum += b;
        diff.push_back(a - b);
    }
    double mean = 0, var = 0;
    for (double d : diff) mean += d / reps;
    for (double d : diff) var += (d - mean) * (d - mean) / (reps - 1);
    CHECK(std::fabs(mean) <= 3 * std::sqrt(var / reps) + 1e-12);
    CHECK(a_sum / reps <= 0.3 + 0.05);
    CHECK(b_sum / reps <= 0.3 + 0.05);
}

TEST_CASE("scenario validation and names") {
    hat::Scenario s;
    s.alphas = {};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.alphas = {1.2};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.alphas = {0.1};
    s.K = 2000;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.K = 10;
    s.threads = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.threads = 1;
    CHECK_NOTHROW(s.validate());
    for (auto k : {hat::ScenarioKind::idealized_binary, hat::ScenarioKind::idealized_nonbinary,
                   hat::ScenarioKind::means_regular, hat::ScenarioKind::regression_rare}) {
        CHECK(hat::parse_scenario_kind(hat::to_string(k)) == k);
    }
    CHECK_THROWS_AS(hat::parse_scenario_kind("fig9"), std::invalid_argument);
}
