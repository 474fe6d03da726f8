#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hat/rational.hpp"
#include "hat/tree.hpp"

namespace hat {

/// Membership mask over tree nodes, indexed by NodeId.
using NodeMask = std::vector<bool>;

/// Ordered grouping of p leaves into contiguous ranges.
struct Partition {
    std::vector<LeafRange> groups;

    static Partition from_sizes(std::span<const int> sizes);
    static Partition single(int p) { return Partition{{LeafRange{0, p}}}; }

    int n_leaves() const { return groups.empty() ? 0 : groups.back().end(); }
    int size() const { return static_cast<int>(groups.size()); }
    /// Group index of every leaf position.
    std::vector<int> labels() const;
    /// Throws std::invalid_argument unless the ranges tile [0, p) in order.
    void validate() const;

    bool operator==(const Partition&) const = default;
};

/// Bit j set iff leaves j and j+1 are in different groups.
struct BarrierVector {
    std::vector<std::uint8_t> bits;

    std::string str() const;
    static BarrierVector parse(std::string_view s);
    bool operator==(const BarrierVector&) const = default;
};

/// FSP (equivalently FDP of barriers) and TPP as exact fractions.
struct SplitRates {
    Rational fsp;
    Rational tpp;
    bool operator==(const SplitRates&) const = default;
};

/// Tree-structural split counts for a rejection set.
struct SplitCounts {
    std::int64_t false_splits = 0;  // V
    std::int64_t total_splits = 0;  // R
    Rational fsp;                   // V / (R v 1)
    Rational tpp;
};

BarrierVector partition_to_barriers(const Partition& c);
Partition barriers_to_partition(const BarrierVector& b);

/// Barrier-form rates. FDP is 0 with no discoveries; TPP is 1 when the truth
/// has no barriers.
SplitRates fdp_tpp_barrier(const BarrierVector& truth, const BarrierVector& achieved);

/// Group-form rates on two partitions of the same p. TPP is 1 when K = 1.
SplitRates fsp_tpp_groups(const Partition& truth, const Partition& achieved);

/// Group-form rates for arbitrary (not necessarily contiguous) groupings
/// given as per-leaf group labels.
SplitRates fsp_tpp_labels(std::span<const int> truth, std::span<const int> achieved);

/// Partition induced by nodes whose leaf sets tile the leaves.
Partition nodes_to_partition(const Tree& t, std::span<const NodeId> nodes);

/// Throws std::invalid_argument unless `rejected` is empty or a rooted
/// subtree of internal nodes containing the root.
void validate_rejection(const Tree& t, const NodeMask& rejected);

/// Groups are the leaf sets of unrejected children of rejected nodes (leaves
/// included). An empty rejection yields a single group.
Partition rejection_to_partition(const Tree& t, const NodeMask& rejected);

/// Rejected nodes whose leaves all fall in a single true group.
NodeMask false_rejections(const Tree& t, const NodeMask& rejected, std::span<const NodeId> bstar);

/// V and R from tree degrees, with FSP = V/(R v 1) and TPP from the groups.
SplitCounts split_counts_from_rejection(const Tree& t, const NodeMask& rejected,
                                        std::span<const NodeId> bstar);

}  // namespace hat
