#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hat/metrics.hpp"
#include "hat/tree.hpp"

namespace fixtures {

// Eleven leaves, four levels. The true groups are {d1}, {d2}, {d3,d4},
// {d5,d6} and {d7,...,d11}; rejecting root, b1, b2 and c4 gives seven groups,
// three false splits out of six.
inline const char* kFig2Newick =
    "(((d1,d2)c1,(d3,d4)c2,(d5,d6)c3)b1,((d7,d8,d9)c4,(d10,d11)c5)b2)root;";
inline const std::vector<std::string> kFig2Bstar{"d1", "d2", "c2", "c3", "b2"};
inline const std::vector<std::string> kFig2Rejected{"root", "b1", "b2", "c4"};

inline std::vector<hat::NodeId> ids(const hat::Tree& t, const std::vector<std::string>& names) {
    std::vector<hat::NodeId> out;
    for (const auto& n : names) out.push_back(*t.find(n));
    return out;
}

inline hat::NodeMask mask(const hat::Tree& t, const std::vector<std::string>& names) {
    hat::NodeMask m(t.size(), false);
    for (const auto& n : names) m[*t.find(n)] = true;
    return m;
}

// Random tree over p leaves by recursive splitting of contiguous leaf runs
// into between 2 and max_degree parts.
inline hat::Tree random_tree(std::mt19937_64& rng, int p, int max_degree) {
    std::vector<std::string> labels;
    std::vector<std::vector<hat::NodeId>> children;
    int leaf_no = 0;
    std::function<hat::NodeId(int)> build = [&](int len) -> hat::NodeId {
        const auto id = static_cast<hat::NodeId>(labels.size());
        labels.emplace_back();
        children.emplace_back();
        if (len == 1) {
            labels[id] = "x" + std::to_string(++leaf_no);
            return id;
        }
        const int kmax = std::min(max_degree, len);
        const int k = std::uniform_int_distribution<int>(2, kmax)(rng);
        // k - 1 distinct cut points in 1..len-1.
        std::vector<int> cuts(len - 1);
        for (int i = 0; i < len - 1; ++i) cuts[i] = i + 1;
        std::shuffle(cuts.begin(), cuts.end(), rng);
        cuts.resize(k - 1);
        std::sort(cuts.begin(), cuts.end());
        int prev = 0;
        cuts.push_back(len);
        for (int c : cuts) {
            const hat::NodeId child = build(c - prev);
            children[id].push_back(child);
            prev = c;
        }
        return id;
    };
    build(p);
    return hat::Tree::from_children(labels, children, 0);
}

// Rooted subtree of internal nodes: each internal child of a kept node is
// kept with probability q. The root is always kept.
inline hat::NodeMask random_rejection(std::mt19937_64& rng, const hat::Tree& t, double q) {
    hat::NodeMask m(t.size(), false);
    m[t.root()] = true;
    std::bernoulli_distribution keep(q);
    for (hat::NodeId u = 1; u < t.size(); ++u) {
        if (!t.is_leaf(u) && m[*t.parent(u)] && keep(rng)) m[u] = true;
    }
    return m;
}

// Random set of nodes whose leaf sets partition the leaves: descend from the
// root, stopping at each internal node with probability q.
inline std::vector<hat::NodeId> random_cut(std::mt19937_64& rng, const hat::Tree& t, double q) {
    std::vector<hat::NodeId> out;
    std::bernoulli_distribution stop(q);
    std::function<void(hat::NodeId)> go = [&](hat::NodeId u) {
        if (t.is_leaf(u) || stop(rng)) {
            out.push_back(u);
            return;
        }
        for (hat::NodeId v : t.children(u)) go(v);
    };
    go(t.root());
    return out;
}

}  // namespace fixtures
