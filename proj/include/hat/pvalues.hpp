#pragma once

#include <span>
#include <vector>

#include "hat/pvalue_assignment.hpp"
#include "hat/special.hpp"
#include "hat/tree.hpp"

namespace hat {

/// One noisy observation per leaf, aligned to the tree's leaf order, with
/// known noise standard deviation.
struct LeafObservations {
    std::vector<double> y;
    double sigma = 1.0;

    /// Finite entries and sigma >= 0. sigma = 0 is accepted as the noiseless
    /// limit: nodes with identical child means get p = 1, others p = 0.
    void validate(const Tree& t) const;
};

/// Chi-square one-way ANOVA statistic sigma^-2 * sum_v |L_v| (ybar_v - ybar_u)^2
/// over the children v of u.
double anova_statistic(const Tree& t, const LeafObservations& obs, NodeId u);

/// Known-variance one-way ANOVA p-value with deg(u) - 1 degrees of freedom.
double anova_pvalue(const Tree& t, const LeafObservations& obs, NodeId u);
PValueAssignment anova_pvalues(const Tree& t, const LeafObservations& obs);

/// Several observations per leaf (leaf order), for the estimated-variance
/// F-test variant. Outside the known-variance validity results.
struct LeafSamples {
    std::vector<std::vector<double>> samples;
};

/// One-way F-test comparing the child branches of u, using the pooled
/// within-branch variance of the samples below u.
double anova_f_pvalue(const Tree& t, const LeafSamples& data, NodeId u);
PValueAssignment anova_f_pvalues(const Tree& t, const LeafSamples& data);

/// Simes combination min_k p_(k) * m / k over the m internal nodes of the
/// subtree rooted at a (a included), clamped to 1.
double simes_combine(const Tree& t, const PValueAssignment& pv, NodeId a);
PValueAssignment simes_pvalues(const Tree& t, const PValueAssignment& pv);

}  // namespace hat
