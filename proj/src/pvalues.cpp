#include "hat/pvalues.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/fisher_f.hpp>

namespace hat {

std::string_view to_string(PValueSource s) {
    switch (s) {
        case PValueSource::anova: return "anova";
        case PValueSource::simes: return "simes";
        case PValueSource::debiased: return "debiased";
        case PValueSource::external: return "external";
    }
    return "unknown";
}

void PValueAssignment::validate(const Tree& t) const {
    if (size() != t.size()) throw std::invalid_argument("p-value table does not match the tree");
    for (NodeId u : t.internal_nodes()) {
        const double p = values_[u];
        if (p != p) throw std::invalid_argument("missing p-value for node '" + t.name(u) + "'");
        if (p < 0.0 || p > 1.0) {
            throw std::invalid_argument("p-value for node '" + t.name(u) + "' is outside [0, 1]");
        }
    }
}

void LeafObservations::validate(const Tree& t) const {
    if (static_cast<int>(y.size()) != t.n_leaves()) {
        throw std::invalid_argument("observation count does not match the number of leaves");
    }
    for (double v : y) {
        if (!std::isfinite(v)) throw std::invalid_argument("observations must be finite");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be finite and >= 0");
}

double anova_statistic(const Tree& t, const LeafObservations& obs, NodeId u) {
    if (t.is_leaf(u)) throw std::invalid_argument("ANOVA needs an internal node");
    const auto range = t.leaves_under(u);
    // Centre on one observation so identical values give exact zeros.
    const double ref = obs.y[range.start];
    auto mean_of = [&](LeafRange r) {
        double s = 0.0;
        for (int i = r.start; i < r.end(); ++i) s += obs.y[i] - ref;
        return s / r.len;
    };
    const double mean_u = mean_of(range);
    double ss = 0.0;
    for (NodeId v : t.children(u)) {
        const auto rv = t.leaves_under(v);
        const double dev = mean_of(rv) - mean_u;
        ss += rv.len * dev * dev;
    }
    if (obs.sigma == 0.0) return ss == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return ss / (obs.sigma * obs.sigma);
}

double anova_pvalue(const Tree& t, const LeafObservations& obs, NodeId u) {
    const double stat = anova_statistic(t, obs, u);
    if (std::isinf(stat)) return 0.0;
    return chi2_sf(stat, t.degree(u) - 1);
}

PValueAssignment anova_pvalues(const Tree& t, const LeafObservations& obs) {
    obs.validate(t);
    PValueAssignment pv(t.size(), PValueSource::anova);
    for (NodeId u : t.internal_nodes()) pv.set(u, anova_pvalue(t, obs, u));
    return pv;
}

double anova_f_pvalue(const Tree& t, const LeafSamples& data, NodeId u) {
    if (t.is_leaf(u)) throw std::invalid_argument("F-test needs an internal node");
    if (static_cast<int>(data.samples.size()) != t.n_leaves()) {
        throw std::invalid_argument("sample table does not match the number of leaves");
    }
    const int k = t.degree(u);
    std::vector<double> branch_sum(k, 0.0);
    std::vector<long> branch_n(k, 0);
    for (int c = 0; c < k; ++c) {
        const auto r = t.leaves_under(t.children(u)[c]);
        for (int i = r.start; i < r.end(); ++i) {
            for (double v : data.samples[i]) {
                branch_sum[c] += v;
                ++branch_n[c];
            }
        }
    }
    long total_n = 0;
    double total_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        if (branch_n[c] == 0) throw std::invalid_argument("F-test branch without samples below '" + t.name(u) + "'");
        total_n += branch_n[c];
        total_sum += branch_sum[c];
    }
    if (total_n <= k) throw std::invalid_argument("F-test needs more samples than branches at '" + t.name(u) + "'");
    const double grand = total_sum / total_n;
    double between = 0.0, within = 0.0;
    for (int c = 0; c < k; ++c) {
        const double mean = branch_sum[c] / branch_n[c];
        between += branch_n[c] * (mean - grand) * (mean - grand);
        const auto r = t.leaves_under(t.children(u)[c]);
        for (int i = r.start; i < r.end(); ++i) {
            for (double v : data.samples[i]) within += (v - mean) * (v - mean);
        }
    }
    if (within == 0.0) return between == 0.0 ? 1.0 : 0.0;
    const double df1 = k - 1, df2 = static_cast<double>(total_n - k);
    const double f = (between / df1) / (within / df2);
    boost::math::fisher_f_distribution<double> dist(df1, df2);
    return boost::math::cdf(boost::math::complement(dist, f));
}

PValueAssignment anova_f_pvalues(const Tree& t, const LeafSamples& data) {
    PValueAssignment pv(t.size(), PValueSource::anova);
    for (NodeId u : t.internal_nodes()) pv.set(u, anova_f_pvalue(t, data, u));
    return pv;
}

double simes_combine(const Tree& t, const PValueAssignment& pv, NodeId a) {
    if (t.is_leaf(a)) throw std::invalid_argument("Simes combination needs an internal node");
    std::vector<double> ps;
    for (NodeId v = a; v < a + t.subtree_size(a); ++v) {
        if (t.is_leaf(v)) continue;
        if (!pv.has(v)) throw std::invalid_argument("missing p-value for node '" + t.name(v) + "'");
        ps.push_back(pv[v]);
    }
    std::stable_sort(ps.begin(), ps.end());
    const double m = static_cast<double>(ps.size());
    double best = 1.0;
    for (std::size_t k = 0; k < ps.size(); ++k) best = std::min(best, ps[k] * m / static_cast<double>(k + 1));
    return best;
}

PValueAssignment simes_pvalues(const Tree& t, const PValueAssignment& pv) {
    PValueAssignment out(t.size(), PValueSource::simes);
    for (NodeId u : t.internal_nodes()) out.set(u, simes_combine(t, pv, u));
    return out;
}

}  // namespace hat
