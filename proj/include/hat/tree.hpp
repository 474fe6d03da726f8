#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hat {

using NodeId = std::int32_t;

/// Contiguous slice [start, start + len) of a tree's leaf order.
struct LeafRange {
    int start = 0;
    int len = 0;

    int end() const { return start + len; }
    bool contains(const LeafRange& o) const { return o.start >= start && o.end() <= end(); }
    bool operator==(const LeafRange&) const = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)),
          position_(position) {}

    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

enum class TreeFormat { newick, json };

/**
 * Immutable rooted tree over p >= 2 leaves.
 *
 * Node ids are assigned in DFS preorder, so the root is node 0, the subtree
 * of u occupies ids [u, u + subtree_size(u)), and every node's leaves form a
 * contiguous slice of leaf_order(). Internal nodes must have at least two
 * children; unary chains are rejected at construction.
 */
class Tree {
public:
    /// Builds a tree from an arbitrary child table. Ids are renumbered into
    /// DFS preorder; empty labels mean "unlabeled".
    static Tree from_children(const std::vector<std::string>& labels,
                              const std::vector<std::vector<NodeId>>& children,
                              NodeId root);

    /// Balanced tree in which every internal node has `degree` children and
    /// leaves sit at depth `depth` (root at depth 1). Leaves are labeled
    /// "l1".."lp", internal nodes "n<id>".
    static Tree regular(int degree, int depth);

    int size() const { return static_cast<int>(parent_.size()); }
    NodeId root() const { return 0; }
    int n_leaves() const { return static_cast<int>(leaf_order_.size()); }

    std::optional<NodeId> parent(NodeId u) const;
    std::span<const NodeId> children(NodeId u) const;
    int degree(NodeId u) const { return static_cast<int>(children(u).size()); }
    bool is_leaf(NodeId u) const { return children(u).empty(); }
    int depth(NodeId u) const;
    int subtree_size(NodeId u) const;

    /// Position of u's leaves within leaf_order().
    LeafRange leaves_under(NodeId u) const;
    std::span<const NodeId> leaf_order() const { return leaf_order_; }
    /// Leaf ids for a range of leaf_order().
    std::span<const NodeId> leaves_in(LeafRange r) const;

    /// Non-leaf nodes at depth d in leaf-order-consistent order, 1 <= d <= D.
    std::span<const NodeId> internal_nodes_at_depth(int d) const;
    std::span<const NodeId> internal_nodes() const { return internal_; }

    int max_depth() const { return max_depth_; }
    int max_degree() const { return max_degree_; }
    int min_degree() const { return min_degree_; }

    /// Raw label; empty when the input left the node unlabeled.
    const std::string& label(NodeId u) const;
    /// Label, or "#<id>" for unlabeled nodes. '#' cannot appear in labels,
    /// so names are unique.
    std::string name(NodeId u) const;
    /// Resolves a label or "#<id>" name.
    std::optional<NodeId> find(std::string_view name) const;

private:
    Tree() = default;
    void check(NodeId u) const;

    std::vector<NodeId> parent_;
    std::vector<int> child_offset_;  // CSR into child_ids_
    std::vector<NodeId> child_ids_;
    std::vector<int> depth_;
    std::vector<LeafRange> leaf_range_;
    std::vector<int> subtree_size_;
    std::vector<NodeId> leaf_order_;
    std::vector<std::string> labels_;
    std::vector<NodeId> internal_;
    std::vector<int> depth_offset_;  // CSR into internal_by_depth_, index d-1
    std::vector<NodeId> internal_by_depth_;
    int max_depth_ = 0;
    int max_degree_ = 0;
    int min_degree_ = 0;
};

Tree parse_newick(std::string_view text);
Tree parse_tree_json(std::string_view text);
Tree parse_tree(std::string_view text, TreeFormat format);
/// Picks the format from the first non-space character ('{' means JSON).
Tree parse_tree_auto(std::string_view text);

std::string to_newick(const Tree& t);
std::string to_json(const Tree& t);

}  // namespace hat
