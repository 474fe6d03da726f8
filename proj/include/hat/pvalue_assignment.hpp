#pragma once

#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "hat/tree.hpp"

namespace hat {

enum class PValueSource { anova, simes, debiased, external };

std::string_view to_string(PValueSource s);

/// One p-value per internal node, indexed by NodeId. Leaves and unset nodes
/// hold NaN.
class PValueAssignment {
public:
    PValueAssignment() = default;
    explicit PValueAssignment(int n_nodes, PValueSource source = PValueSource::external)
        : values_(n_nodes, std::numeric_limits<double>::quiet_NaN()), source_(source) {}

    void set(NodeId u, double p) { values_.at(u) = p; }
    double operator[](NodeId u) const { return values_[u]; }
    double at(NodeId u) const { return values_.at(u); }
    bool has(NodeId u) const { return values_.at(u) == values_.at(u); }

    PValueSource source() const { return source_; }
    void set_source(PValueSource s) { source_ = s; }
    std::span<const double> values() const { return values_; }
    int size() const { return static_cast<int>(values_.size()); }

    /// Throws std::invalid_argument naming the first internal node that is
    /// missing a value or whose value lies outside [0, 1].
    void validate(const Tree& t) const;

private:
    std::vector<double> values_;
    PValueSource source_ = PValueSource::external;
};

}  // namespace hat
