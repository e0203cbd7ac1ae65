#pragma once

#include "flowx/dataset.hpp"
#include "flowx/refiner.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flowx {

using Selection = std::vector<std::uint8_t>;

/// Per input edge: the total contribution of the flows traversing it,
/// counted once per traversed layer (the layer-collapsed aggregate).
Vector flow_to_edge_scores(const Vector& flow_scores, const FlowIndex& index, const Graph& g);

/// Top-floor((1-sparsity)*n) targets by score; ties broken by canonical
/// index.
Selection select_topk(const Vector& scores, Real sparsity_level);

/// Probability drop of the originally predicted class when the selected
/// input edges are removed at every layer.
Real fidelity_drop(const GnnModel& model, const Graph& g, const Selection& selected_edges,
                   int target_node = -1);

/// Mean drop over samples (Fidelity).
Real fidelity(const GnnModel& model, const std::vector<const Graph*>& graphs,
              const std::vector<Selection>& selections,
              const std::vector<int>& target_nodes = {});

/// Mean fraction of unselected targets.
Real sparsity(const std::vector<Selection>& selections);

/// Fraction of ground-truth elements covered by the selected edges.
/// Undirected elements count as hit when either direction is selected.
Real accuracy(const Graph& g, const Selection& selected_edges);

enum class Method { FlowX, FlowXStar, FlowXDagger, Random };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

struct ExplainConfig {
  Method method = Method::FlowX;
  SamplerConfig sampler;
  RefinerConfig refiner;
  std::uint64_t cap = 2'000'000;
};

/// Runs one explanation end to end and fills every granularity of the
/// result, including the per-input-edge scores.
ExplanationResult explain(const GnnModel& model, const Graph& g, const ExplainConfig& cfg,
                          int target_node = -1);

/// Same, reusing a previously sampled table (no resampling).
ExplanationResult explain_with_table(const GnnModel& model, const Graph& g,
                                     const FlowIndex& index, const FlowScoreTable& table,
                                     const ExplainConfig& cfg, int target_node = -1);

struct SweepSample {
  Index graph_index = 0;
  int target_node = -1;
};

struct SweepLevel {
  Real sparsity_level = 0.0;
  Real mean_fidelity = 0.0;
  int n_samples = 0;
};

struct SweepResult {
  std::string method;
  std::vector<SweepLevel> levels;
  Real mean_fidelity = 0.0;
  int n_samples = 0;
  int n_failed = 0;
  std::optional<Real> mean_accuracy;  // at sparsity 0.9, when ground truth exists
};

std::vector<Real> default_sparsity_levels();

/// Draws up to sample_n explanation subjects from the dataset test split
/// (falling back to all samples when the split is smaller).
std::vector<SweepSample> draw_sweep_samples(const Dataset& data, int sample_n,
                                            std::uint64_t seed);

/// Fidelity-vs-sparsity curve for one method. Failures are excluded and
/// counted. Deterministic for fixed seeds regardless of the worker
/// count.
SweepResult sparsity_sweep(const GnnModel& model, const Dataset& data,
                           const std::vector<SweepSample>& samples, const ExplainConfig& cfg,
                           const std::vector<Real>& levels = default_sparsity_levels(),
                           bool with_accuracy = false, int jobs = 1);

}  // namespace flowx
