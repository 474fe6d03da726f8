#include "hat/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <utility>

namespace hat {

Partition Partition::from_sizes(std::span<const int> sizes) {
    Partition c;
    int start = 0;
    for (int s : sizes) {
        c.groups.push_back({start, s});
        start += s;
    }
    c.validate();
    return c;
}

std::vector<int> Partition::labels() const {
    std::vector<int> out(n_leaves());
    for (int g = 0; g < size(); ++g) {
        std::fill_n(out.begin() + groups[g].start, groups[g].len, g);
    }
    return out;
}

void Partition::validate() const {
    if (groups.empty()) throw std::invalid_argument("partition has no groups");
    int next = 0;
    for (const auto& g : groups) {
        if (g.start != next || g.len <= 0) {
            throw std::invalid_argument("partition groups must be non-empty contiguous ranges covering all leaves in order");
        }
        next = g.end();
    }
}

std::string BarrierVector::str() const {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s += b ? '1' : '0';
    return s;
}

BarrierVector BarrierVector::parse(std::string_view s) {
    BarrierVector b;
    for (char c : s) {
        if (c != '0' && c != '1') throw std::invalid_argument("barrier string must contain only '0' and '1'");
        b.bits.push_back(c == '1');
    }
    return b;
}

BarrierVector partition_to_barriers(const Partition& c) {
    c.validate();
    BarrierVector b;
    b.bits.assign(c.n_leaves() - 1, 0);
    for (int g = 0; g + 1 < c.size(); ++g) b.bits[c.groups[g].end() - 1] = 1;
    return b;
}

Partition barriers_to_partition(const BarrierVector& b) {
    Partition c;
    int start = 0;
    const int p = static_cast<int>(b.bits.size()) + 1;
    for (int j = 0; j < p - 1; ++j) {
        if (b.bits[j]) {
            c.groups.push_back({start, j + 1 - start});
            start = j + 1;
        }
    }
    c.groups.push_back({start, p - start});
    return c;
}

SplitRates fdp_tpp_barrier(const BarrierVector& truth, const BarrierVector& achieved) {
    if (truth.bits.size() != achieved.bits.size()) {
        throw std::invalid_argument("barrier vectors differ in length");
    }
    std::int64_t discoveries = 0, false_disc = 0, true_disc = 0, true_total = 0;
    for (std::size_t j = 0; j < truth.bits.size(); ++j) {
        const bool t = truth.bits[j], a = achieved.bits[j];
        discoveries += a;
        true_total += t;
        false_disc += a && !t;
        true_disc += a && t;
    }
    return {Rational(false_disc, std::max<std::int64_t>(discoveries, 1)),
            true_total == 0 ? Rational(1) : Rational(true_disc, true_total)};
}

SplitRates fsp_tpp_labels(std::span<const int> truth, std::span<const int> achieved) {
    if (truth.size() != achieved.size()) {
        throw std::invalid_argument("partitions cover different numbers of leaves");
    }
    if (truth.empty()) throw std::invalid_argument("partitions are empty");
    std::set<int> k_set(truth.begin(), truth.end());
    std::set<int> m_set(achieved.begin(), achieved.end());
    std::set<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < truth.size(); ++i) pairs.emplace(truth[i], achieved[i]);
    const auto k = static_cast<std::int64_t>(k_set.size());
    const auto m = static_cast<std::int64_t>(m_set.size());
    const auto inter = static_cast<std::int64_t>(pairs.size());
    return {Rational(inter - k, std::max<std::int64_t>(m - 1, 1)),
            k == 1 ? Rational(1) : Rational(k - 1 - (inter - m), k - 1)};
}

SplitRates fsp_tpp_groups(const Partition& truth, const Partition& achieved) {
    truth.validate();
    achieved.validate();
    if (truth.n_leaves() != achieved.n_leaves()) {
        throw std::invalid_argument("partitions cover different numbers of leaves");
    }
    const auto a = truth.labels();
    const auto b = achieved.labels();
    return fsp_tpp_labels(a, b);
}

Partition nodes_to_partition(const Tree& t, std::span<const NodeId> nodes) {
    Partition c;
    for (NodeId u : nodes) c.groups.push_back(t.leaves_under(u));
    std::sort(c.groups.begin(), c.groups.end(),
              [](const LeafRange& x, const LeafRange& y) { return x.start < y.start; });
    try {
        c.validate();
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("node leaf sets do not partition the leaves");
    }
    if (c.n_leaves() != t.n_leaves()) {
        throw std::invalid_argument("node leaf sets do not partition the leaves");
    }
    return c;
}

void validate_rejection(const Tree& t, const NodeMask& rejected) {
    if (static_cast<int>(rejected.size()) != t.size()) {
        throw std::invalid_argument("rejection mask size does not match tree");
    }
    for (NodeId u = 0; u < t.size(); ++u) {
        if (!rejected[u]) continue;
        if (t.is_leaf(u)) throw std::invalid_argument("leaf '" + t.name(u) + "' cannot be rejected");
        const auto par = t.parent(u);
        if (par && !rejected[*par]) {
            throw std::invalid_argument("rejected node '" + t.name(u) + "' has an unrejected parent");
        }
    }
}

Partition rejection_to_partition(const Tree& t, const NodeMask& rejected) {
    validate_rejection(t, rejected);
    Partition c;
    // Preorder ids: skipping a subtree is a jump by its size.
    for (NodeId u = 0; u < t.size();) {
        if (rejected[u]) {
            ++u;
        } else {
            c.groups.push_back(t.leaves_under(u));
            u += t.subtree_size(u);
        }
    }
    return c;
}

NodeMask false_rejections(const Tree& t, const NodeMask& rejected, std::span<const NodeId> bstar) {
    validate_rejection(t, rejected);
    const auto labels = nodes_to_partition(t, bstar).labels();
    NodeMask f(t.size(), false);
    for (NodeId u = 0; u < t.size(); ++u) {
        if (!rejected[u]) continue;
        const auto r = t.leaves_under(u);
        f[u] = labels[r.start] == labels[r.end() - 1];  // contiguous groups
    }
    return f;
}

SplitCounts split_counts_from_rejection(const Tree& t, const NodeMask& rejected,
                                        std::span<const NodeId> bstar) {
    const NodeMask f = false_rejections(t, rejected, bstar);
    NodeMask in_bstar(t.size(), false);
    for (NodeId b : bstar) in_bstar[b] = true;

    std::int64_t v = 0, r = 0;
    for (NodeId u = 0; u < t.size(); ++u) {
        if (!rejected[u]) continue;
        int deg_rej = 0;
        for (NodeId c : t.children(u)) deg_rej += rejected[c];
        const int extra = t.degree(u) - deg_rej;
        r += extra;
        if (f[u]) v += extra - (in_bstar[u] ? 1 : 0);
    }
    r = std::max<std::int64_t>(r - 1, 0);

    SplitCounts out;
    out.false_splits = v;
    out.total_splits = r;
    out.fsp = Rational(v, std::max<std::int64_t>(r, 1));
    out.tpp = fsp_tpp_groups(nodes_to_partition(t, bstar), rejection_to_partition(t, rejected)).tpp;
    return out;
}

}  // namespace hat
