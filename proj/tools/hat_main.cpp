// hat: command-line front end for hierarchical aggregation testing.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "hat/io.hpp"
#include "hat/metrics.hpp"
#include "hat/procedure.hpp"
#include "hat/pvalues.hpp"
#include "hat/regression.hpp"
#include "hat/sim.hpp"
#include "hat/tree.hpp"
#include "hat/version.hpp"

namespace {

using hat::InputError;
using json = nlohmann::ordered_json;

enum Exit { kOk = 0, kInput = 2, kSolver = 3, kInternal = 4 };

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

// UTC time of the run; SOURCE_DATE_EPOCH pins it for reproducible manifests.
std::string timestamp() {
    std::time_t now = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end && *end == '\0') now = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
    if (!out) throw InputError("failed writing '" + path + "'");
}

struct Manifest {
    json doc;
    explicit Manifest(const std::string& command) {
        doc["command"] = command;
        doc["version"] = std::string(hat::kVersion);
        doc["parameters"] = json::object();
        doc["seeds"] = json::object();
        doc["inputs"] = json::object();
        doc["outputs"] = json::array();
    }
    std::string input(const std::string& role, const std::string& path) {
        std::string text = hat::read_file(path);
        doc["inputs"][role] = {{"path", path}, {"sha256", sha256_hex(text)}};
        return text;
    }
    void write(const std::string& path) {
        if (path.empty()) return;
        doc["timestamp"] = timestamp();
        write_text(path, doc.dump(2) + "\n");
    }
};

std::string manifest_path(const std::string& explicit_path, const std::string& out) {
    if (!explicit_path.empty()) return explicit_path;
    if (out.empty() || out == "-") return {};
    return out + ".manifest.json";
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---- test ------------------------------------------------------------------

struct TestArgs {
    std::string tree, pvalues, out, audit, manifest;
    double alpha = 0.2;
    std::string family = "independent";
    double epsilon0 = 0.0;
    std::string bound = "depth";
};

int cmd_test(const TestArgs& a) {
    Manifest m("test");
    const hat::Tree t = hat::parse_tree_auto(m.input("tree", a.tree));
    const hat::PValueAssignment pv = hat::read_pvalues_csv(m.input("pvalues", a.pvalues), t);
    hat::HatConfig cfg;
    cfg.alpha = a.alpha;
    cfg.family = hat::parse_family(a.family);
    cfg.epsilon0 = a.epsilon0;
    if (a.bound == "depth") {
        cfg.reshape_bound = hat::ReshapeBound::depth_degree_sum;
    } else if (a.bound == "parent") {
        cfg.reshape_bound = hat::ReshapeBound::parent_depth_degree_sum;
    } else {
        throw std::invalid_argument("--reshape-bound must be 'depth' or 'parent'");
    }
    cfg.validate();
    const hat::HatResult res = hat::run_hat(t, pv, cfg);

    json out = json::parse(hat::partition_to_json(t, res.partition));
    json rejected = json::array();
    for (hat::NodeId u = 0; u < t.size(); ++u) {
        if (res.rejection.rejected[u]) rejected.push_back(t.name(u));
    }
    out["rejected"] = std::move(rejected);
    json degenerate = json::array();
    for (int d : res.rejection.degenerate_depths) degenerate.push_back(d);
    out["degenerate_depths"] = std::move(degenerate);
    write_text(a.out, out.dump(2) + "\n");

    if (!a.audit.empty()) {
        std::string csv = "node,depth,pvalue,threshold,rejected\n";
        for (hat::NodeId u : t.internal_nodes()) {
            const double thr = res.rejection.threshold[u];
            csv += hat::csv_field(t.name(u)) + "," + std::to_string(t.depth(u)) + "," + hat::format_double(pv[u]) +
                   "," + (std::isnan(thr) ? std::string() : hat::format_double(thr)) + "," +
                   (res.rejection.rejected[u] ? "1" : "0") + "\n";
        }
        write_text(a.audit, csv);
        m.doc["outputs"].push_back(a.audit);
    }
    m.doc["parameters"] = {{"alpha", a.alpha},
                           {"family", std::string(hat::to_string(cfg.family))},
                           {"epsilon0", a.epsilon0},
                           {"reshape_bound", a.bound}};
    if (!a.out.empty() && a.out != "-") m.doc["outputs"].push_back(a.out);
    m.write(manifest_path(a.manifest, a.out));
    return kOk;
}

// ---- metrics ---------------------------------------------------------------

struct MetricsArgs {
    std::string truth, achieved;
};

std::string barrier_string(const std::vector<int>& labels) {
    std::string s;
    for (std::size_t j = 0; j + 1 < labels.size(); ++j) s.push_back(labels[j] != labels[j + 1] ? '1' : '0');
    return s;
}

int cmd_metrics(const MetricsArgs& a) {
    const std::vector<int> truth = hat::read_partition_json(hat::read_file(a.truth));
    const std::vector<int> achieved = hat::read_partition_json(hat::read_file(a.achieved));
    if (truth.size() != achieved.size()) {
        throw InputError("partitions cover different numbers of leaves (" + std::to_string(truth.size()) + " vs " +
                         std::to_string(achieved.size()) + ")");
    }
    const hat::SplitRates r = hat::fsp_tpp_labels(truth, achieved);
    std::string text;
    text += "fsp " + r.fsp.str() + " " + hat::format_double(r.fsp.to_double()) + "\n";
    text += "tpp " + r.tpp.str() + " " + hat::format_double(r.tpp.to_double()) + "\n";
    text += "truth_barriers " + barrier_string(truth) + "\n";
    text += "achieved_barriers " + barrier_string(achieved) + "\n";
    write_text("-", text);
    return kOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string scenario = "idealized-binary";
    int p = 1000, k = 500, nonbinary_k = 1, reps = 100, depth = 6, n = 100, threads = 0;
    std::string alphas = "0.1,0.2,0.3", families = "independent,lg";
    double epsilon0 = 0.0, beta_shape = 60.0, sigma = 0.3, beta = 0.6, rho = 0.2, c_sigma = 0.6;
    bool no_simes = false, quiet = false;
    std::uint64_t seed = 1;
    std::string out, manifest;
};

int cmd_simulate(const SimulateArgs& a) {
    hat::Scenario s;
    s.kind = hat::parse_scenario_kind(a.scenario);
    s.p = a.p;
    s.K = a.k;
    s.nonbinary_k = a.nonbinary_k;
    s.alphas.clear();
    for (const auto& x : split_list(a.alphas)) s.alphas.push_back(hat::parse_double(x, 0));
    s.families.clear();
    for (const auto& f : split_list(a.families)) s.families.push_back(hat::parse_family(f));
    s.epsilon0 = a.epsilon0;
    s.reps = a.reps;
    s.beta_shape = a.beta_shape;
    s.sigma = a.sigma;
    s.tree_depth = a.depth;
    s.simes = !a.no_simes;
    s.regression.beta = a.beta;
    s.regression.rho = a.rho;
    s.regression.n = a.n;
    s.regression.c_sigma = a.c_sigma;
    s.regression.depth = a.depth;
    s.seed = a.seed;
    s.threads = a.threads > 0 ? a.threads : default_threads();
    if (!a.quiet) {
        s.progress = [](int done, int total) {
            if (done == total || done % std::max(1, total / 10) == 0) {
                std::cerr << "replicates " << done << "/" << total << "\n";
            }
        };
    }
    const hat::McResult res = hat::run_monte_carlo(s);

    std::string csv = "scenario,family,alpha,fsr,fsr_se,power,power_se,reps\n";
    for (const auto& c : res.cells) {
        csv += std::string(hat::to_string(s.kind)) + "," + std::string(hat::to_string(c.family)) + "," +
               hat::format_double(c.alpha) + "," + hat::format_double(c.fsr) + "," + hat::format_double(c.fsr_se) +
               "," + hat::format_double(c.power) + "," + hat::format_double(c.power_se) + "," +
               std::to_string(c.reps) + "\n";
    }
    write_text(a.out, csv);

    Manifest m("simulate");
    m.doc["parameters"] = {{"scenario", a.scenario}, {"p", res.p},          {"k", res.K},
                           {"nonbinary_k", a.nonbinary_k}, {"alphas", s.alphas}, {"families", split_list(a.families)},
                           {"epsilon0", a.epsilon0}, {"reps", a.reps},       {"beta_shape", a.beta_shape},
                           {"sigma", a.sigma},       {"depth", a.depth},     {"simes", !a.no_simes},
                           {"n", a.n},               {"beta", a.beta},       {"rho", a.rho},
                           {"c_sigma", a.c_sigma}};
    m.doc["seeds"] = {{"seed", a.seed}};
    if (!a.out.empty() && a.out != "-") m.doc["outputs"].push_back(a.out);
    m.write(manifest_path(a.manifest, a.out));
    if (res.nonconverged > 0) {
        std::cerr << "warning: " << res.nonconverged << " replicates had solver convergence flags\n";
        return kSolver;
    }
    return kOk;
}

// ---- pvalues-anova ---------------------------------------------------------

struct AnovaArgs {
    std::string tree, y, out, manifest;
    double sigma = 1.0;
    bool simes = false;
};

int cmd_pvalues_anova(const AnovaArgs& a) {
    Manifest m("pvalues-anova");
    const hat::Tree t = hat::parse_tree_auto(m.input("tree", a.tree));
    hat::LeafObservations obs;
    obs.y = hat::read_leaf_values_csv(m.input("y", a.y), t);
    obs.sigma = a.sigma;
    hat::PValueAssignment pv = hat::anova_pvalues(t, obs);
    if (a.simes) pv = hat::simes_pvalues(t, pv);
    write_text(a.out, hat::write_pvalues_csv(t, pv));
    m.doc["parameters"] = {{"sigma", a.sigma}, {"simes", a.simes}};
    if (!a.out.empty() && a.out != "-") m.doc["outputs"].push_back(a.out);
    m.write(manifest_path(a.manifest, a.out));
    return kOk;
}

// ---- pvalues-regression ----------------------------------------------------

struct RegressionArgs {
    std::string tree, X, y, out, diagnostics, manifest;
    std::string noise_design = "expanded";
    double lambda_n_c = 1.0, tau = 1.0;
    int folds = 10, threads = 0;
    std::uint64_t seed = 1;
};

int cmd_pvalues_regression(const RegressionArgs& a) {
    Manifest m("pvalues-regression");
    const hat::Tree t = hat::parse_tree_auto(m.input("tree", a.tree));
    hat::RegressionData d;
    d.X = hat::read_design_csv(m.input("X", a.X), t);
    d.y = hat::read_response_csv(m.input("y", a.y));
    if (d.X.rows() != d.y.size()) {
        throw InputError("X has " + std::to_string(d.X.rows()) + " rows but y has " + std::to_string(d.y.size()));
    }
    if (!(a.tau > 0.0)) throw std::invalid_argument("--tau must be positive");
    hat::RegressionPValueConfig cfg;
    cfg.lambda_n_c = a.lambda_n_c;
    cfg.tau = a.tau;
    cfg.folds = a.folds;
    cfg.seed = a.seed;
    cfg.sigma_design = a.noise_design == "leaves" ? hat::NoiseDesign::leaves : hat::NoiseDesign::expanded;
    cfg.threads = a.threads > 0 ? a.threads : default_threads();
    const hat::RegressionPValues res = hat::node_pvalues_regression(d, t, cfg);
    write_text(a.out, hat::write_pvalues_csv(t, res.pvalues));

    if (!a.diagnostics.empty()) {
        json diag;
        diag["sigma_hat"] = res.sigma.sigma;
        diag["sigma_converged"] = res.sigma.converged;
        diag["sigma_degenerate"] = res.sigma.degenerate;
        diag["lambda"] = res.cv.best.lambda;
        diag["nu"] = res.cv.best.nu;
        diag["lambda_n"] = res.lambda_n;
        diag["fit"] = {{"objective", res.fit.objective},
                       {"iterations", res.fit.iterations},
                       {"kkt_residual", res.fit.kkt_residual},
                       {"converged", res.fit.converged}};
        json nodes = json::array();
        for (const auto& r : res.nodes) {
            nodes.push_back({{"node", t.name(r.node)},
                             {"q_hat", r.q_hat},
                             {"q_debiased", r.q_debiased},
                             {"variance", r.variance},
                             {"pvalue", r.pvalue},
                             {"converged", r.converged}});
        }
        diag["nodes"] = std::move(nodes);
        write_text(a.diagnostics, diag.dump(2) + "\n");
        m.doc["outputs"].push_back(a.diagnostics);
    }
    m.doc["parameters"] = {
        {"lambda_n_c", a.lambda_n_c}, {"tau", a.tau}, {"folds", a.folds}, {"noise_design", a.noise_design}};
    m.doc["seeds"] = {{"seed", a.seed}};
    if (!a.out.empty() && a.out != "-") m.doc["outputs"].push_back(a.out);
    m.write(manifest_path(a.manifest, a.out));
    if (!res.converged) {
        std::cerr << "error: a solver did not converge; outputs carry the best iterate\n";
        return kSolver;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical aggregation testing on rooted trees"};
    app.set_version_flag("--version", std::string(hat::kVersion));
    app.require_subcommand(1);

    TestArgs ta;
    auto* test = app.add_subcommand("test", "Run the top-down procedure and write the selected partition");
    test->add_option("--tree", ta.tree, "Tree file, Newick or JSON")->required();
    test->add_option("--pvalues", ta.pvalues, "CSV with columns node,pvalue covering every internal node")
        ->required();
    test->add_option("--alpha", ta.alpha, "Target false split rate, in (0, 1)");
    test->add_option("--family", ta.family,
                     "Threshold family: independent, independent-shifted, reshaped, reshaped-shifted, lg");
    test->add_option("--epsilon0", ta.epsilon0, "Shift for the shifted families");
    test->add_option("--reshape-bound", ta.bound, "Reshaping normaliser limit: depth or parent");
    test->add_option("--out", ta.out, "Partition JSON (default stdout)");
    test->add_option("--audit", ta.audit, "Per-node CSV: node,depth,pvalue,threshold,rejected");
    test->add_option("--manifest", ta.manifest, "Run manifest path (default <out>.manifest.json)");

    MetricsArgs ma;
    auto* metrics = app.add_subcommand("metrics", "False split proportion and true positive proportion");
    metrics->add_option("--truth", ma.truth, "True partition JSON")->required();
    metrics->add_option("--achieved", ma.achieved, "Estimated partition JSON")->required();

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo estimate of FSR and power");
    simulate->add_option("--scenario", sa.scenario,
                         "idealized-binary, idealized-nonbinary, means-3regular or regression-rare");
    simulate->add_option("--p", sa.p, "Leaves of the clustered binary tree (idealized-binary)");
    simulate->add_option("--k", sa.k, "Number of true groups");
    simulate->add_option("--nonbinary-k", sa.nonbinary_k, "Internal children of the root, 1..4 (idealized-nonbinary)");
    simulate->add_option("--alphas", sa.alphas, "Comma-separated target levels");
    simulate->add_option("--families", sa.families, "Comma-separated threshold families");
    simulate->add_option("--epsilon0", sa.epsilon0, "Shift for the shifted families");
    simulate->add_option("--reps", sa.reps, "Replicates");
    simulate->add_option("--beta-shape", sa.beta_shape, "Non-null p-values ~ Beta(1, b) (idealized)");
    simulate->add_option("--sigma", sa.sigma, "Noise level (means-3regular)");
    simulate->add_option("--depth", sa.depth, "Depth of the 3-regular tree, root at depth 1");
    simulate->add_flag("--no-simes", sa.no_simes, "Use raw ANOVA p-values instead of Simes combinations");
    simulate->add_option("--n", sa.n, "Observations (regression-rare)");
    simulate->add_option("--beta", sa.beta, "Fraction of groups with nonzero coefficient (regression-rare)");
    simulate->add_option("--rho", sa.rho, "Design density (regression-rare)");
    simulate->add_option("--c-sigma", sa.c_sigma, "Noise-to-signal constant (regression-rare)");
    simulate->add_option("--seed", sa.seed, "Master seed");
    simulate->add_option("--threads", sa.threads, "Worker threads (default: all cores)");
    simulate->add_flag("--quiet", sa.quiet, "No progress on stderr");
    simulate->add_option("--out", sa.out, "Results CSV (default stdout)");
    simulate->add_option("--manifest", sa.manifest, "Run manifest path (default <out>.manifest.json)");

    AnovaArgs aa;
    auto* anova = app.add_subcommand("pvalues-anova", "Known-variance ANOVA p-values at every internal node");
    anova->add_option("--tree", aa.tree, "Tree file, Newick or JSON")->required();
    anova->add_option("--y", aa.y, "CSV with columns leaf,y")->required();
    anova->add_option("--sigma", aa.sigma, "Noise standard deviation");
    anova->add_flag("--simes", aa.simes, "Combine over each subtree with Simes' rule");
    anova->add_option("--out", aa.out, "p-value CSV (default stdout)");
    anova->add_option("--manifest", aa.manifest, "Run manifest path (default <out>.manifest.json)");

    RegressionArgs ra;
    auto* reg = app.add_subcommand("pvalues-regression", "Debiased quadratic-form p-values from a linear model");
    reg->add_option("--tree", ra.tree, "Tree file, Newick or JSON")->required();
    reg->add_option("--X", ra.X, "Design CSV; header names the leaf of each column")->required();
    reg->add_option("--y", ra.y, "Response CSV with a single y column")->required();
    reg->add_option("--lambda-n-c", ra.lambda_n_c, "Constraint radius constant c in c sqrt(log p / n)");
    reg->add_option("--tau", ra.tau, "Variance floor constant");
    reg->add_option("--folds", ra.folds, "Cross-validation folds");
    reg->add_option("--noise-design", ra.noise_design, "Design for the scaled-lasso noise estimate")
        ->check(CLI::IsMember({"expanded", "leaves"}));
    reg->add_option("--seed", ra.seed, "Fold assignment seed");
    reg->add_option("--threads", ra.threads, "Worker threads (default: all cores)");
    reg->add_option("--out", ra.out, "p-value CSV (default stdout)");
    reg->add_option("--diagnostics", ra.diagnostics, "Diagnostics JSON");
    reg->add_option("--manifest", ra.manifest, "Run manifest path (default <out>.manifest.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInput;
    }

    try {
        if (*test) return cmd_test(ta);
        if (*metrics) return cmd_metrics(ma);
        if (*simulate) return cmd_simulate(sa);
        if (*anova) return cmd_pvalues_anova(aa);
        if (*reg) return cmd_pvalues_regression(ra);
    } catch (const hat::InvariantViolation& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInput;
    } catch (const hat::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInput;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
