#pragma once

#include <cstddef>
#include <vector>

#include "fltrust/common.hpp"
#include "fltrust/data.hpp"
#include "fltrust/model.hpp"

namespace fltrust::ref {

// Serial reference implementations, kept deliberately naive and independent
// of the production code paths (full sorts, brute-force scans, direct
// formulas). They serve as test oracles and as the baseline side of the
// kernel benchmarks; do not optimize them.

// Full-sort trimmed mean.
ParamVector trimmed_mean(const std::vector<ParamVector>& updates, int k);

// Full-sort coordinate-wise median; even counts take the midpoint.
ParamVector median(const std::vector<ParamVector>& updates);

// Brute-force scores: all pairwise distances, sorted per row.
std::vector<double> krum_scores(const std::vector<ParamVector>& updates, int f);

// Index of the minimal brute-force score, ties to the lowest index.
std::size_t krum_select(const std::vector<ParamVector>& updates, int f);

// Cross-entropy evaluated directly from exponentials (no log-sum-exp
// rearrangement); adequate for moderate logits.
double softmax_cross_entropy(const ModelSpec& spec, const ParamVector& params,
                             const Dataset& data, const std::vector<std::size_t>& idx);

// Central finite differences of the loss, one coordinate at a time.
ParamVector finite_diff_gradient(const ModelSpec& spec, const ParamVector& params,
                                 const Dataset& data, const std::vector<std::size_t>& idx,
                                 double step);

// Trust-weighted aggregate evaluated directly from the defining formula
// (standard variant only), including the zero-total-trust fallback to the
// server update.
ParamVector fltrust_standard(const std::vector<ParamVector>& updates,
                             const ParamVector& server_update);

// Attack objective evaluated directly from its defining formula: the signed
// gap between the no-attack aggregate and the aggregate with the first m
// updates replaced by unit directions rescaled to the server norm.
double adaptive_objective(const std::vector<ParamVector>& dirs,
                          const std::vector<ParamVector>& true_updates, std::size_t m,
                          const ParamVector& server_update);

}  // namespace fltrust::ref
