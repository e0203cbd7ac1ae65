#pragma once

#include "flowx/flow_index.hpp"
#include "flowx/gnn.hpp"
#include "flowx/sampler.hpp"

#include <limits>
#include <string>
#include <vector>

namespace flowx {

enum class WeightInit { UniformLow, HalfNoise };

struct RefinerConfig {
  Real learning_rate = 0.3;
  int iterations = 500;
  Real r = 8.0;  // exponential-redistribution exponent
  WeightInit init = WeightInit::UniformLow;
  Real init_range = 0.1;  // uniform [0, range], or noise amplitude around 0.5
  std::uint64_t seed = 0;
  std::string trace_path;  // optional per-iteration CSV
};

/// Contribution scores at every granularity plus the binary selection
/// used by the metrics. input_edge_scores and the selection are filled
/// by the evaluation harness.
struct ExplanationResult {
  std::string method;
  int target_class = -1;
  std::uint64_t seed = 0;
  Vector flow_scores;
  Vector layer_edge_scores;
  Vector input_edge_scores;
  std::vector<std::uint8_t> selection;
  Real selection_sparsity = std::numeric_limits<Real>::quiet_NaN();
};

/// s(F^k) = S(F^k) . w over finalized table rows.
Vector score_flows(const FlowScoreTable& table, const Vector& w);

/// s_hat(layer edge) = sum of the scores of the flows carried by it.
Vector aggregate_to_layer_edges(const Vector& flow_scores, const FlowIndex& index);

/// Affine min-max to [0,1]; a constant vector maps to all 0.5.
Vector minmax_normalize(const Vector& v);

/// One-sided derivative convention: the min/max contributions flow to
/// the first attaining index.
Vector minmax_backward(const Vector& v, const Vector& grad_out);

struct RedistributionCache {
  Vector normalized;  // after input min-max
  Vector powered;     // after x^r
  Vector output;      // after output min-max
};

/// normalize -> x^r -> normalize. Every output entry lies in [0,1];
/// ranks are preserved for non-constant input.
Vector exponential_redistribution(const Vector& s_hat, Real r,
                                  RedistributionCache* cache = nullptr);

Vector exponential_redistribution_backward(const Vector& s_hat, const RedistributionCache& cache,
                                           Real r, const Vector& grad_out);

/// Scatter of a layer-edge gradient back to flows (transpose of
/// aggregate_to_layer_edges).
Vector aggregate_backward(const Vector& grad_edges, const FlowIndex& index);

struct RefinerOutcome {
  Vector w;  // trained weight vector (FlowX) or flow scores (FlowX-dagger)
  ExplanationResult result;
  std::vector<Real> losses;  // loss at the start of each iteration
};

/// Loss of the refinement objective for a given weight vector:
/// log p_y of the forward pass masked by 1 - M(w).
Real refiner_loss(const GnnModel& model, const Graph& g, const FlowScoreTable& table,
                  const FlowIndex& index, const Vector& w, Real r, int target_class,
                  int target_node = -1);

/// Analytic d loss / d w through score -> aggregate -> redistribution ->
/// masked forward -> log-probability.
Vector refiner_loss_grad(const GnnModel& model, const Graph& g, const FlowScoreTable& table,
                         const FlowIndex& index, const Vector& w, Real r, int target_class,
                         int target_node = -1, Real* loss_out = nullptr);

/// Gradient-descent refinement of the position weight vector w; emits
/// the refined flow scores after the final iteration.
RefinerOutcome train_refiner(const GnnModel& model, const Graph& g, const FlowScoreTable& table,
                             const FlowIndex& index, const RefinerConfig& cfg,
                             int target_class = -1, int target_node = -1);

/// Ablation: trains a per-flow score vector directly from random init,
/// with plain min-max in place of exponential redistribution.
RefinerOutcome flowx_dagger(const GnnModel& model, const Graph& g, const FlowIndex& index,
                            const RefinerConfig& cfg, int target_class = -1,
                            int target_node = -1);

}  // namespace flowx
