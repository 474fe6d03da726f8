#include "hat/sim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

namespace hat {

namespace {

double rational_value(const Rational& r) { return r.to_double(); }

std::vector<int> subtree_heights(const Tree& t) {
    std::vector<int> h(t.size(), 0);
    for (NodeId u = t.size() - 1; u >= 0; --u) {
        for (NodeId v : t.children(u)) h[u] = std::max(h[u], h[v] + 1);
    }
    return h;
}

Partition bstar_partition(const Tree& t, std::span<const NodeId> bstar) { return nodes_to_partition(t, bstar); }

}  // namespace

Dendrogram single_linkage_1d(std::span<const double> points) {
    const int p = static_cast<int>(points.size());
    if (p < 2) throw std::invalid_argument("clustering needs at least two points");
    std::vector<int> by_pos(p);
    std::iota(by_pos.begin(), by_pos.end(), 0);
    std::stable_sort(by_pos.begin(), by_pos.end(), [&](int a, int b) { return points[a] < points[b]; });
    std::vector<int> gaps(p - 1);
    std::iota(gaps.begin(), gaps.end(), 0);
    auto gap = [&](int i) { return points[by_pos[i + 1]] - points[by_pos[i]]; };
    std::stable_sort(gaps.begin(), gaps.end(), [&](int a, int b) { return gap(a) < gap(b); });

    // Nodes 0..p-1 are the sorted points; merge m creates node p + m. Each
    // cluster is a contiguous run of sorted positions; track run endpoints.
    const int total = 2 * p - 1;
    std::vector<std::string> labels(total);
    std::vector<std::vector<NodeId>> children(total);
    std::vector<double> merge_height(total, 0.0);
    std::vector<int> left_end(total), right_end(total), owner_left(p), owner_right(p);
    for (int i = 0; i < p; ++i) {
        labels[i] = "l" + std::to_string(by_pos[i] + 1);
        left_end[i] = right_end[i] = i;
        owner_left[i] = owner_right[i] = i;
    }
    for (int m = 0; m < p - 1; ++m) {
        const int g = gaps[m];
        const int node = p + m;
        const int a = owner_right[g];      // cluster ending at position g
        const int b = owner_left[g + 1];   // cluster starting at g + 1
        const int lo = left_end[a], hi = right_end[b];
        children[node] = {a, b};
        labels[node] = "m" + std::to_string(m + 1);
        merge_height[node] = gap(g);
        left_end[node] = lo;
        right_end[node] = hi;
        owner_right[hi] = node;
        owner_left[lo] = node;
    }
    Tree tree = Tree::from_children(labels, children, total - 1);
    std::vector<double> height(tree.size(), 0.0);
    for (int k = p; k < total; ++k) height[*tree.find(labels[k])] = merge_height[k];
    std::vector<double> pts;
    for (NodeId leaf : tree.leaf_order()) pts.push_back(points[std::stoi(tree.label(leaf).substr(1)) - 1]);
    return Dendrogram{std::move(tree), std::move(height), std::move(pts)};
}

Dendrogram gen_binary_tree(int p, std::uint64_t seed) {
    if (p < 2) throw std::invalid_argument("a binary tree needs p >= 2");
    Philox rng(seed, kScenarioStream);
    std::vector<double> pts(p);
    for (double& x : pts) x = rng.uniform();
    return single_linkage_1d(pts);
}

TreeCut cut_tree(const Tree& t, int K, const std::vector<double>* height) {
    if (K < 1 || K > t.n_leaves()) throw std::invalid_argument("K must lie in [1, p]");
    TreeCut cut;
    std::vector<bool> split(t.size(), false);
    if (height) {
        if (static_cast<int>(height->size()) != t.size()) throw std::invalid_argument("height table does not match");
        std::vector<NodeId> order(t.internal_nodes().begin(), t.internal_nodes().end());
        std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
            if ((*height)[a] != (*height)[b]) return (*height)[a] > (*height)[b];
            return a < b;
        });
        int groups = 1;
        std::size_t k = 0;
        for (; k < order.size() && groups < K; ++k) {
            const NodeId u = order[k];
            if (u != t.root() && !split[*t.parent(u)]) throw std::invalid_argument("merge heights are not monotone");
            split[u] = true;
            groups += t.degree(u) - 1;
        }
        // A tie at the cut level makes the height cut ambiguous.
        if (k > 0 && k < order.size() && (*height)[order[k]] == (*height)[order[k - 1]]) cut.exact = false;
        if (groups != K) cut.exact = false;
    } else {
        const auto h = subtree_heights(t);
        std::vector<NodeId> frontier{t.root()};
        while (static_cast<int>(frontier.size()) < K) {
            NodeId best = -1;
            for (NodeId u : frontier) {
                if (t.is_leaf(u)) continue;
                if (best < 0 || h[u] > h[best] || (h[u] == h[best] && u < best)) best = u;
            }
            if (best < 0) break;
            split[best] = true;
            frontier.erase(std::find(frontier.begin(), frontier.end(), best));
            for (NodeId v : t.children(best)) frontier.push_back(v);
        }
        if (static_cast<int>(frontier.size()) != K) cut.exact = false;
    }
    for (NodeId u = 0; u < t.size(); ++u) {
        if (split[u]) continue;
        const auto par = t.parent(u);
        if (!par || split[*par]) cut.nodes.push_back(u);
    }
    return cut;
}

Tree gen_nonbinary_tree(int k) {
    if (k < 1 || k > 4) throw std::invalid_argument("the number of internal children must lie in 1..4");
    std::vector<std::string> labels{"root"};
    std::vector<std::vector<NodeId>> children(1);
    for (int c = 1; c <= 5; ++c) {
        const NodeId id = static_cast<NodeId>(labels.size());
        children[0].push_back(id);
        labels.push_back((c <= k ? "a" : "b") + std::to_string(c));
        children.emplace_back();
        if (c <= k) {
            for (int j = 1; j <= 10; ++j) {
                children[id].push_back(static_cast<NodeId>(labels.size()));
                labels.push_back("a" + std::to_string(c) + "_" + std::to_string(j));
                children.emplace_back();
            }
        }
    }
    return Tree::from_children(labels, children, 0);
}

double sample_beta_1(Philox& rng, double b) {
    if (!(b > 0.0)) throw std::invalid_argument("Beta shape must be positive");
    // Inverse CDF of Beta(1, b): F(x) = 1 - (1 - x)^b. 1 - U is in (0, 1].
    return -std::expm1(std::log1p(-rng.uniform()) / b);
}

NodeMask non_null_nodes(const Tree& t, std::span<const NodeId> bstar) {
    NodeMask mark(t.size(), false);
    for (NodeId b : bstar) {
        for (auto a = t.parent(b); a; a = t.parent(*a)) mark[*a] = true;
    }
    return mark;
}

PValueAssignment gen_idealized_pvalues(const Tree& t, std::span<const NodeId> bstar, Philox& rng,
                                       double beta_shape) {
    const NodeMask alt = non_null_nodes(t, bstar);
    PValueAssignment pv(t.size(), PValueSource::external);
    for (NodeId u : t.internal_nodes()) pv.set(u, alt[u] ? sample_beta_1(rng, beta_shape) : rng.uniform());
    return pv;
}

std::vector<NodeId> constant_groups(const Tree& t, const Eigen::VectorXd& theta) {
    if (theta.size() != t.n_leaves()) throw std::invalid_argument("coefficients do not match the tree");
    std::vector<NodeId> out;
    NodeId u = 0;
    while (u < t.size()) {
        const auto r = t.leaves_under(u);
        const auto seg = theta.segment(r.start, r.len);
        if ((seg.array() == seg(0)).all()) {
            out.push_back(u);
            u += t.subtree_size(u);
        } else {
            ++u;
        }
    }
    return out;
}

MeansScenario gen_means_scenario(int K, double sigma, std::uint64_t seed, int degree, int depth) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    Tree tree = Tree::regular(degree, depth);
    if (K < 1 || K > tree.n_leaves()) throw std::invalid_argument("K must lie in [1, p]");
    const TreeCut cut = cut_tree(tree, K);
    Philox rng(seed, kScenarioStream);
    std::uniform_real_distribution<double> mag(1.0, 1.5);
    Eigen::VectorXd theta(tree.n_leaves());
    for (NodeId b : cut.nodes) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double m = sign * mag(rng);
        const auto r = tree.leaves_under(b);
        theta.segment(r.start, r.len).setConstant(m);
    }
    std::vector<NodeId> bstar = constant_groups(tree, theta);
    Partition truth = bstar_partition(tree, bstar);
    return MeansScenario{std::move(tree), std::move(bstar), std::move(truth), std::move(theta), sigma};
}

LeafObservations draw_means_observations(const MeansScenario& s, Philox& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    LeafObservations obs;
    obs.sigma = s.sigma;
    obs.y.resize(s.theta.size());
    for (Eigen::Index i = 0; i < s.theta.size(); ++i) obs.y[i] = s.theta(i) + s.sigma * noise(rng);
    return obs;
}

RegressionScenario gen_regression_scenario(const RegressionScenarioParams& prm, std::uint64_t seed) {
    if (!(prm.beta >= 0.0 && prm.beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
    if (!(prm.rho > 0.0 && prm.rho <= 1.0)) throw std::invalid_argument("rho must lie in (0, 1]");
    if (prm.n < 2) throw std::invalid_argument("n must be >= 2");
    if (!(prm.c_sigma > 0.0)) throw std::invalid_argument("noise constant must be positive");
    Tree tree = Tree::regular(prm.degree, prm.depth);
    if (prm.K < 1 || prm.K > tree.n_leaves()) throw std::invalid_argument("K must lie in [1, p]");
    const TreeCut cut = cut_tree(tree, prm.K);
    const int K = static_cast<int>(cut.nodes.size());
    const int p = tree.n_leaves();

    Philox rng(seed, kScenarioStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    const long zeros = std::lround((1.0 - prm.beta) * K);
    Eigen::VectorXd theta(p);
    for (int g = 0; g < K; ++g) {
        const double value = g < zeros ? 0.0 : 0.5 * normal(rng);
        const auto r = tree.leaves_under(cut.nodes[g]);
        theta.segment(r.start, r.len).setConstant(value);
    }
    RegressionData data;
    data.X.resize(prm.n, p);
    for (int j = 0; j < p; ++j) {
        for (int i = 0; i < prm.n; ++i) {
            const double xt = normal(rng);
            data.X(i, j) = rng.uniform() < prm.rho ? xt : 0.0;
        }
    }
    const double sigma = prm.c_sigma * (data.X * theta).norm() / std::sqrt(static_cast<double>(prm.n));
    data.y = data.X * theta;

    std::vector<NodeId> bstar = constant_groups(tree, theta);
    Partition truth = bstar_partition(tree, bstar);
    RegressionScenario s{std::move(tree), cut.nodes, std::move(bstar), std::move(truth), std::move(data),
                         std::move(theta), sigma};
    return s;
}

Eigen::VectorXd draw_regression_response(const RegressionScenario& s, Philox& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd y = s.data.X * s.theta;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += s.sigma * normal(rng);
    return y;
}

std::string_view to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::idealized_binary: return "idealized-binary";
        case ScenarioKind::idealized_nonbinary: return "idealized-nonbinary";
        case ScenarioKind::means_regular: return "means-3regular";
        case ScenarioKind::regression_rare: return "regression-rare";
    }
    return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view s) {
    for (auto k : {ScenarioKind::idealized_binary, ScenarioKind::idealized_nonbinary, ScenarioKind::means_regular,
                   ScenarioKind::regression_rare}) {
        if (s == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

void Scenario::validate() const {
    if (reps < 1) throw std::invalid_argument("replicate count must be >= 1");
    if (alphas.empty()) throw std::invalid_argument("no alpha levels given");
    if (families.empty()) throw std::invalid_argument("no threshold families given");
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    }
    if (!(beta_shape > 0.0)) throw std::invalid_argument("Beta shape must be positive");
    if (threads < 1) throw std::invalid_argument("thread count must be >= 1");
    if (kind == ScenarioKind::idealized_binary && (p < 2 || K < 1 || K > p)) {
        throw std::invalid_argument("idealized-binary needs p >= 2 and 1 <= K <= p");
    }
    if (kind == ScenarioKind::idealized_nonbinary && (nonbinary_k < 1 || nonbinary_k > 4)) {
        throw std::invalid_argument("idealized-nonbinary needs k in 1..4");
    }
}

McResult run_monte_carlo(const Scenario& s) {
    s.validate();

    // Scenario-level fixed structure.
    std::optional<Tree> tree;
    std::vector<NodeId> bstar;
    Partition truth;
    std::optional<MeansScenario> means;
    std::optional<RegressionScenario> regression;
    switch (s.kind) {
        case ScenarioKind::idealized_binary: {
            Dendrogram dg = gen_binary_tree(s.p, s.seed);
            bstar = cut_tree(dg.tree, s.K, &dg.height).nodes;
            tree.emplace(std::move(dg.tree));
            break;
        }
        case ScenarioKind::idealized_nonbinary: {
            tree.emplace(gen_nonbinary_tree(s.nonbinary_k));
            bstar.assign(tree->children(tree->root()).begin(), tree->children(tree->root()).end());
            break;
        }
        case ScenarioKind::means_regular: {
            means.emplace(gen_means_scenario(s.K, s.sigma, s.seed, 3, s.tree_depth));
            tree.emplace(means->tree);
            bstar = means->bstar;
            break;
        }
        case ScenarioKind::regression_rare: {
            RegressionScenarioParams prm = s.regression;
            prm.K = s.K;
            regression.emplace(gen_regression_scenario(prm, s.seed));
            tree.emplace(regression->tree);
            bstar = regression->bstar;
            break;
        }
    }
    const Tree& t = *tree;
    truth = nodes_to_partition(t, bstar);
    std::vector<NodeId> internal_bstar;
    for (NodeId b : bstar) {
        if (!t.is_leaf(b)) internal_bstar.push_back(b);
    }

    const std::size_t n_cells = s.families.size() * s.alphas.size();
    struct Rep {
        std::vector<double> fsp, tpp;
        std::vector<double> bstar_p;
        bool nonconverged = false;
    };
    std::vector<Rep> reps(s.reps);

    auto run_rep = [&](int r) {
        Philox rng(s.seed, replicate_stream(static_cast<std::uint64_t>(r)));
        PValueAssignment pv;
        Rep& out = reps[r];
        switch (s.kind) {
            case ScenarioKind::idealized_binary:
            case ScenarioKind::idealized_nonbinary:
                pv = gen_idealized_pvalues(t, bstar, rng, s.beta_shape);
                break;
            case ScenarioKind::means_regular: {
                const LeafObservations obs = draw_means_observations(*means, rng);
                pv = anova_pvalues(t, obs);
                if (s.simes) pv = simes_pvalues(t, pv);
                break;
            }
            case ScenarioKind::regression_rare: {
                RegressionData d = regression->data;
                d.y = draw_regression_response(*regression, rng);
                RegressionPValueConfig cfg = s.regression_cfg;
                cfg.seed = s.seed + static_cast<std::uint64_t>(r);
                cfg.threads = 1;
                const RegressionPValues res = node_pvalues_regression(d, t, cfg);
                pv = res.pvalues;
                out.nonconverged = !res.converged;
                break;
            }
        }
        if (s.keep_bstar_pvalues) {
            for (NodeId b : internal_bstar) out.bstar_p.push_back(pv[b]);
        }
        out.fsp.reserve(n_cells);
        out.tpp.reserve(n_cells);
        for (ThresholdFamily fam : s.families) {
            for (double alpha : s.alphas) {
                HatConfig cfg;
                cfg.alpha = alpha;
                cfg.family = fam;
                cfg.epsilon0 = is_shifted(fam) ? s.epsilon0 : 0.0;
                const HatResult hr = run_hat(t, pv, cfg);
                const SplitRates rates = fsp_tpp_groups(truth, hr.partition);
                out.fsp.push_back(rational_value(rates.fsp));
                out.tpp.push_back(rational_value(rates.tpp));
            }
        }
    };

    std::mutex progress_mutex;
    int done = 0;
    auto finish_rep = [&](int r) {
        run_rep(r);
        if (!s.progress) return;
        const std::lock_guard<std::mutex> lock(progress_mutex);
        s.progress(++done, s.reps);
    };

    const int threads = std::min(s.threads, s.reps);
    if (threads <= 1) {
        for (int r = 0; r < s.reps; ++r) finish_rep(r);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (int k = 0; k < threads; ++k) {
            pool.emplace_back([&, k] {
                try {
                    for (int r = k; r < s.reps; r += threads) finish_rep(r);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    McResult res;
    res.p = t.n_leaves();
    res.K = static_cast<int>(bstar.size());
    std::size_t cell = 0;
    const double n = s.reps;
    for (ThresholdFamily fam : s.families) {
        for (double alpha : s.alphas) {
            double sf = 0.0, st = 0.0;
            for (const Rep& r : reps) {
                sf += r.fsp[cell];
                st += r.tpp[cell];
            }
            const double mf = sf / n, mt = st / n;
            double vf = 0.0, vt = 0.0;
            for (const Rep& r : reps) {
                vf += (r.fsp[cell] - mf) * (r.fsp[cell] - mf);
                vt += (r.tpp[cell] - mt) * (r.tpp[cell] - mt);
            }
            const double denom = s.reps > 1 ? (n - 1.0) : 1.0;
            res.cells.push_back(McCell{fam, alpha, mf, std::sqrt(vf / denom / n), mt, std::sqrt(vt / denom / n),
                                       s.reps});
            ++cell;
        }
    }
    for (const Rep& r : reps) {
        if (r.nonconverged) ++res.nonconverged;
        if (s.keep_bstar_pvalues) res.bstar_pvalues.push_back(r.bstar_p);
    }
    return res;
}

}  // namespace hat
