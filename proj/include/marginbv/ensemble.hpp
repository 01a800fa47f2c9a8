#pragma once

#include <span>
#include <string>
#include <vector>

#include "marginbv/decomp.hpp"
#include "marginbv/loss_zoo.hpp"
#include "marginbv/matrix.hpp"
#include "marginbv/risk_link.hpp"

namespace marginbv {

enum class Combiner { arithmetic, additive, weighted, centroid };

Combiner parse_combiner(const std::string& name);
std::string to_string(Combiner c);

// Member outputs (M x N) and combination weights. Arithmetic, weighted and
// centroid rules use weights summing to one; the additive rule sums members
// scaled by alpha_i (all ones unless the weighted rule supplies them).
struct EnsembleSpec {
    Matrix member_margins;
    std::vector<double> weights;
    Combiner combiner = Combiner::arithmetic;

    static EnsembleSpec uniform(Matrix margins, Combiner combiner = Combiner::arithmetic);

    std::size_t member_count() const { return member_margins.rows(); }
    std::size_t point_count() const { return member_margins.cols(); }
};

// l(y fbar) = sum_i w_i l(y f_i) - sum_i w_i B_l(y f_i, y fbar).
DecompositionReport margin_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec,
                                     std::span<const int> labels);

// Label-free ambiguity sum_i w_i B_l(f_i, fbar), averaged over points.
double label_free_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec);

// Same identity with a label-free ambiguity term; gradient-symmetric losses only.
DecompositionReport gradient_symmetric_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec,
                                                 std::span<const int> labels);

// Summed ensembles f_add = sum_i alpha_i f_i rewritten as the mean of M alpha_i f_i.
DecompositionReport additive_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec,
                                       std::span<const int> labels);

struct CentroidResult {
    double value;
    std::size_t clamped;
};

// psi([-L']^{-1}(sum_i w_i -L'(psi^{-1}(f_i)))). Throws RangeError when more
// than 1% of the members need clamping into the link's range.
CentroidResult centroid_combine(const LinkBundle& bundle, std::span<const double> members,
                                std::span<const double> weights);
double centroid_combine(const LinkBundle& bundle, std::span<const double> members);

// B_{-L}(p, qbar) = sum_i w_i B_{-L}(p, q_i) - sum_i w_i B_{-L}(qbar, q_i) with the
// centroid qbar. targets[j] is the probability p at point j; with observed
// labels use (y + 1) / 2.
DecompositionReport centroid_ambiguity(const LossDescriptor& loss, const LinkBundle& bundle,
                                       const EnsembleSpec& spec, std::span<const double> targets);

}  // namespace marginbv
