#pragma once

#include "flowx/flow_index.hpp"
#include "flowx/gnn.hpp"
#include "flowx/graph.hpp"

#include <json.hpp>

#include <functional>
#include <vector>

namespace flowx {

enum class GameValue { Probability, Logit };

/// Coalition value of a kept layer-edge set, indexed canonically.
using CoalitionGame = std::function<Real(const std::vector<char>& kept)>;

struct SamplerConfig {
  int steps = 30;
  std::uint64_t seed = 0;
  int target_class = -1;  // -1: predicted class on the unmasked graph
  int target_node = -1;   // node tasks only
  GameValue value = GameValue::Probability;
  bool exhaustive = false;  // enumerate all |A|! permutations (|A|! <= 10080)
  int jobs = 1;
};

struct StepRecord {
  Index edge;
  Real marginal;
  Index newly_removed;
};

/// Output of the marginal-contribution sampler: per-flow score vectors
/// indexed by permutation position, the matching removal counts, and the
/// per-layer-edge mean marginal (the permutation-averaged Shapley
/// estimate at layer-edge granularity).
struct FlowScoreTable {
  Matrix scores;  // |F| x |A|, finalized
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  Vector edge_marginal_mean;  // |A|
  int steps = 0;
  std::uint64_t seed = 0;
  int target_class = -1;
  Real full_value = 0.0;   // f(A)
  Real empty_value = 0.0;  // f(empty)
  std::vector<std::vector<StepRecord>> step_log;  // per step, per iteration
};

/// Monte-Carlo permutation sampling of marginal contributions over layer
/// edges, distributing each marginal uniformly over the flows newly
/// removed with the edge. Iterations that remove no new flow record the
/// removal but assign no score. Deterministic for a given (seed, steps)
/// regardless of the worker count.
FlowScoreTable sample_marginal_contributions(const CoalitionGame& game, Index universe,
                                             const FlowIndex& index,
                                             const SamplerConfig& cfg);

FlowScoreTable sample_marginal_contributions(const GnnModel& model, const Graph& g,
                                             const FlowIndex& index,
                                             const SamplerConfig& cfg);

/// Game whose value is the target-class probability (or logit) of the
/// restricted forward pass.
CoalitionGame make_model_game(const GnnModel& model, const Graph& g, int target_class,
                              int target_node = -1,
                              GameValue value = GameValue::Probability);

struct ShapleyReport {
  Vector values;  // per player
  Real full_value = 0.0;
  Real empty_value = 0.0;
  int target_class = -1;
};

/// Exact Shapley values by full subset enumeration; refuses more than 20
/// players. Test oracle for the sampler.
ShapleyReport shapley_exact(const CoalitionGame& game, Index num_players);
ShapleyReport shapley_exact(const GnnModel& model, const Graph& g, int target_class = -1,
                            int target_node = -1, GameValue value = GameValue::Probability);

/// Sampling-only flow scores: dot product of each finalized row with the
/// constant weight vector 1/|A|.
Vector flowx_star(const FlowScoreTable& table);

nlohmann::json table_to_json(const FlowScoreTable& table);
FlowScoreTable table_from_json(const nlohmann::json& j);

}  // namespace flowx
