#include "hat/tree.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace hat {

namespace {

bool is_label_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

void validate_label(const std::string& s) {
    for (char c : s) {
        if (!is_label_char(c)) {
            throw std::invalid_argument("label '" + s + "' contains characters outside [A-Za-z0-9_.-]");
        }
    }
}

}  // namespace

Tree Tree::from_children(const std::vector<std::string>& labels,
                         const std::vector<std::vector<NodeId>>& children,
                         NodeId root) {
    const int n = static_cast<int>(children.size());
    if (static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("label table and child table differ in size");
    }
    if (root < 0 || root >= n) {
        throw std::invalid_argument("root id out of range");
    }

    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
        if (l.empty()) continue;
        validate_label(l);
        if (!seen.insert(l).second) {
            throw std::invalid_argument("duplicate label '" + l + "'");
        }
    }

    // Iterative preorder walk assigning new ids; detects cycles and sharing.
    std::vector<NodeId> new_id(n, -1);
    std::vector<NodeId> order;
    order.reserve(n);
    std::vector<NodeId> stack{root};
    while (!stack.empty()) {
        const NodeId u = stack.back();
        stack.pop_back();
        if (u < 0 || u >= n) throw std::invalid_argument("child id out of range");
        if (new_id[u] != -1) throw std::invalid_argument("node reachable twice (cycle or shared child)");
        new_id[u] = static_cast<NodeId>(order.size());
        order.push_back(u);
        const auto& ch = children[u];
        if (ch.size() == 1) {
            const std::string who = labels[u].empty() ? "#" + std::to_string(u) : labels[u];
            throw std::invalid_argument("unary internal node '" + who + "'");
        }
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    if (static_cast<int>(order.size()) != n) {
        throw std::invalid_argument("child table contains nodes unreachable from the root");
    }

    Tree t;
    t.parent_.assign(n, -1);
    t.labels_.resize(n);
    t.child_offset_.assign(n + 1, 0);
    for (int k = 0; k < n; ++k) {
        const NodeId old = order[k];
        t.labels_[k] = labels[old];
        t.child_offset_[k + 1] = t.child_offset_[k] + static_cast<int>(children[old].size());
        for (NodeId c : children[old]) {
            t.child_ids_.push_back(new_id[c]);
            t.parent_[new_id[c]] = k;
        }
    }

    t.depth_.assign(n, 1);
    for (int u = 1; u < n; ++u) t.depth_[u] = t.depth_[t.parent_[u]] + 1;

    // Subtree sizes and leaf ranges by reverse preorder.
    t.subtree_size_.assign(n, 1);
    for (int u = n - 1; u > 0; --u) t.subtree_size_[t.parent_[u]] += t.subtree_size_[u];
    t.leaf_range_.assign(n, LeafRange{});
    for (int u = 0; u < n; ++u) {
        if (t.child_offset_[u] == t.child_offset_[u + 1]) {
            t.leaf_range_[u] = {static_cast<int>(t.leaf_order_.size()), 1};
            t.leaf_order_.push_back(u);
        }
    }
    for (int u = n - 1; u >= 0; --u) {
        const auto ch = t.children(u);
        if (ch.empty()) continue;
        t.leaf_range_[u] = {t.leaf_range_[ch.front()].start,
                            t.leaf_range_[ch.back()].end() - t.leaf_range_[ch.front()].start};
    }
    if (t.leaf_order_.size() < 2) {
        throw std::invalid_argument("tree must have at least two leaves");
    }

    t.max_depth_ = *std::max_element(t.depth_.begin(), t.depth_.end());
    t.max_degree_ = 0;
    t.min_degree_ = n;
    std::vector<std::vector<NodeId>> by_depth(t.max_depth_);
    for (int u = 0; u < n; ++u) {
        const int deg = t.degree(u);
        if (deg == 0) continue;
        t.internal_.push_back(u);
        by_depth[t.depth_[u] - 1].push_back(u);
        t.max_degree_ = std::max(t.max_degree_, deg);
        t.min_degree_ = std::min(t.min_degree_, deg);
    }
    t.depth_offset_.assign(1, 0);
    for (const auto& level : by_depth) {
        t.internal_by_depth_.insert(t.internal_by_depth_.end(), level.begin(), level.end());
        t.depth_offset_.push_back(static_cast<int>(t.internal_by_depth_.size()));
    }
    return t;
}

Tree Tree::regular(int degree, int depth) {
    if (degree < 2 || depth < 2) {
        throw std::invalid_argument("regular tree needs degree >= 2 and depth >= 2");
    }
    std::vector<std::vector<NodeId>> children(1);
    std::vector<NodeId> frontier{0};
    for (int d = 1; d < depth; ++d) {
        std::vector<NodeId> next;
        for (NodeId u : frontier) {
            for (int k = 0; k < degree; ++k) {
                const auto id = static_cast<NodeId>(children.size());
                children.emplace_back();
                children[u].push_back(id);
                next.push_back(id);
            }
        }
        frontier = std::move(next);
    }
    Tree shape = from_children(std::vector<std::string>(children.size()), children, 0);
    std::vector<std::string> labels(shape.size());
    int leaf = 0;
    for (NodeId u = 0; u < shape.size(); ++u) {
        labels[u] = shape.is_leaf(u) ? "l" + std::to_string(++leaf) : "n" + std::to_string(u);
    }
    std::vector<std::vector<NodeId>> ch(shape.size());
    for (NodeId u = 0; u < shape.size(); ++u) {
        ch[u].assign(shape.children(u).begin(), shape.children(u).end());
    }
    return from_children(labels, ch, 0);
}

void Tree::check(NodeId u) const {
    if (u < 0 || u >= size()) throw std::out_of_range("unknown node id " + std::to_string(u));
}

std::optional<NodeId> Tree::parent(NodeId u) const {
    check(u);
    if (parent_[u] < 0) return std::nullopt;
    return parent_[u];
}

std::span<const NodeId> Tree::children(NodeId u) const {
    check(u);
    return std::span<const NodeId>(child_ids_).subspan(
        child_offset_[u], child_offset_[u + 1] - child_offset_[u]);
}

int Tree::depth(NodeId u) const {
    check(u);
    return depth_[u];
}

int Tree::subtree_size(NodeId u) const {
    check(u);
    return subtree_size_[u];
}

LeafRange Tree::leaves_under(NodeId u) const {
    check(u);
    return leaf_range_[u];
}

std::span<const NodeId> Tree::leaves_in(LeafRange r) const {
    if (r.start < 0 || r.len < 0 || r.end() > n_leaves()) {
        throw std::out_of_range("leaf range out of bounds");
    }
    return std::span<const NodeId>(leaf_order_).subspan(r.start, r.len);
}

std::span<const NodeId> Tree::internal_nodes_at_depth(int d) const {
    if (d < 1 || d > max_depth_) {
        throw std::out_of_range("depth " + std::to_string(d) + " outside [1, " +
                                std::to_string(max_depth_) + "]");
    }
    return std::span<const NodeId>(internal_by_depth_)
        .subspan(depth_offset_[d - 1], depth_offset_[d] - depth_offset_[d - 1]);
}

const std::string& Tree::label(NodeId u) const {
    check(u);
    return labels_[u];
}

std::string Tree::name(NodeId u) const {
    check(u);
    return labels_[u].empty() ? "#" + std::to_string(u) : labels_[u];
}

std::optional<NodeId> Tree::find(std::string_view name) const {
    if (!name.empty() && name.front() == '#') {
        const std::string digits(name.substr(1));
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return std::nullopt;
        const long id = std::stol(digits);
        if (id < 0 || id >= size() || !labels_[id].empty()) return std::nullopt;
        return static_cast<NodeId>(id);
    }
    for (NodeId u = 0; u < size(); ++u) {
        if (labels_[u] == name) return u;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Newick

namespace {

class NewickParser {
public:
    explicit NewickParser(std::string_view s) : s_(s) {}

    Tree parse() {
        skip_ws();
        node();
        skip_ws();
        expect(';');
        skip_ws();
        if (pos_ != s_.size()) throw ParseError("trailing characters after ';'", pos_);
        return Tree::from_children(labels_, children_, 0);
    }

private:
    // Iterative to tolerate deep trees.
    void node() {
        struct Frame {
            NodeId id;
            std::size_t open_pos;
        };
        std::vector<Frame> stack;
        for (;;) {
            skip_ws();
            const NodeId id = new_node();
            if (!stack.empty()) children_[stack.back().id].push_back(id);
            if (peek() == '(') {
                stack.push_back({id, pos_});
                ++pos_;
                continue;
            }
            read_label(id, /*leaf=*/true);
            // Close as many groups as the input closes.
            for (;;) {
                skip_ws();
                if (stack.empty()) return;
                if (peek() == ',') {
                    ++pos_;
                    break;
                }
                if (peek() == ')') {
                    ++pos_;
                    const Frame f = stack.back();
                    stack.pop_back();
                    if (children_[f.id].size() < 2) {
                        throw ParseError("unary internal node", f.open_pos);
                    }
                    read_label(f.id, /*leaf=*/false);
                    continue;
                }
                throw ParseError(pos_ >= s_.size() ? "unexpected end of input"
                                                   : std::string("unexpected character '") + s_[pos_] + "'",
                                 pos_);
            }
        }
    }

    NodeId new_node() {
        children_.emplace_back();
        labels_.emplace_back();
        return static_cast<NodeId>(children_.size() - 1);
    }

    void read_label(NodeId id, bool leaf) {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && is_label_char(s_[pos_])) ++pos_;
        std::string label(s_.substr(start, pos_ - start));
        if (label.empty() && leaf && pos_ < s_.size() && s_[pos_] == ':') {
            throw ParseError("branch lengths are not supported", pos_);
        }
        if (pos_ < s_.size() && s_[pos_] == ':') {
            throw ParseError("branch lengths are not supported", pos_);
        }
        if (!label.empty() && !seen_.insert(label).second) {
            throw ParseError("duplicate label '" + label + "'", start);
        }
        labels_[id] = std::move(label);
    }

    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

    void expect(char c) {
        if (peek() != c) {
            throw ParseError(std::string("expected '") + c + "'", pos_);
        }
        ++pos_;
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    std::vector<std::vector<NodeId>> children_;
    std::vector<std::string> labels_;
    std::unordered_set<std::string> seen_;
};

}  // namespace

Tree parse_newick(std::string_view text) {
    return NewickParser(text).parse();
}

std::string to_newick(const Tree& t) {
    std::string out;
    // Explicit stack of (node, next child index).
    std::vector<std::pair<NodeId, int>> stack{{t.root(), 0}};
    if (!t.is_leaf(t.root())) out += '(';
    while (!stack.empty()) {
        auto& [u, k] = stack.back();
        const auto ch = t.children(u);
        if (k < static_cast<int>(ch.size())) {
            if (k > 0) out += ',';
            const NodeId c = ch[k++];
            if (t.is_leaf(c)) {
                out += t.label(c);
            } else {
                out += '(';
                stack.emplace_back(c, 0);
            }
            continue;
        }
        out += ')';
        out += t.label(u);
        stack.pop_back();
    }
    out += ';';
    return out;
}

// ---------------------------------------------------------------------------
// JSON

Tree parse_tree_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
    }
    std::vector<std::vector<NodeId>> children;
    std::vector<std::string> labels;
    std::vector<std::pair<const nlohmann::json*, NodeId>> stack;
    auto add = [&](const nlohmann::json& j, NodeId parent) {
        if (!j.is_object()) throw std::invalid_argument("tree node must be a JSON object");
        const auto id = static_cast<NodeId>(children.size());
        children.emplace_back();
        std::string label;
        if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
            if (!it->is_string()) throw std::invalid_argument("node label must be a string");
            label = it->get<std::string>();
        }
        labels.push_back(std::move(label));
        if (parent >= 0) children[parent].push_back(id);
        stack.emplace_back(&j, id);
    };
    add(doc, -1);
    // Preorder: children are pushed in reverse so ids follow left-to-right.
    std::vector<std::pair<const nlohmann::json*, NodeId>> work;
    while (!stack.empty()) {
        auto [j, id] = stack.back();
        stack.pop_back();
        auto it = j->find("children");
        if (it == j->end() || it->is_null()) continue;
        if (!it->is_array()) throw std::invalid_argument("'children' must be an array");
        if (it->size() == 1) {
            throw std::invalid_argument("unary internal node '" +
                                        (labels[id].empty() ? "#" + std::to_string(id) : labels[id]) + "'");
        }
        const std::size_t first = stack.size();
        for (const auto& c : *it) add(c, id);
        std::reverse(stack.begin() + static_cast<long>(first), stack.end());
    }
    return Tree::from_children(labels, children, 0);
}

std::string to_json(const Tree& t) {
    std::vector<nlohmann::json> built(t.size());
    for (NodeId u = t.size() - 1; u >= 0; --u) {
        nlohmann::json j = nlohmann::json::object();
        if (!t.label(u).empty()) j["label"] = t.label(u);
        if (!t.is_leaf(u)) {
            j["children"] = nlohmann::json::array();
            for (NodeId c : t.children(u)) j["children"].push_back(std::move(built[c]));
        }
        built[u] = std::move(j);
    }
    return built[0].dump();
}

Tree parse_tree(std::string_view text, TreeFormat format) {
    return format == TreeFormat::json ? parse_tree_json(text) : parse_newick(text);
}

Tree parse_tree_auto(std::string_view text) {
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        return parse_tree(text, c == '{' ? TreeFormat::json : TreeFormat::newick);
    }
    throw ParseError("empty tree input", 0);
}

}  // namespace hat
