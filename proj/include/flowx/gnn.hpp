#pragma once

#include "flowx/dataset.hpp"
#include "flowx/graph.hpp"
#include "flowx/types.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace flowx {

enum class LayerKind { Gcn, Gin };
enum class ReadoutKind { MeanPool, NodeLevel };

struct DenseLayer {
  Matrix W;
  Vector b;
};

/// Small message-passing classifier. Each message-passing layer is a
/// stack of dense stages applied after aggregation (one stage for GCN,
/// a two-layer MLP for GIN), every stage followed by ReLU. The head is
/// two fully-connected layers with dropout between them; dropout is
/// active only inside train().
struct GnnModel {
  LayerKind kind = LayerKind::Gcn;
  int T = 3;
  ReadoutKind readout = ReadoutKind::MeanPool;
  Real gin_eps = 0.0;  // folded into the self-loop connectivity entries
  Real dropout = 0.0;
  std::vector<std::vector<DenseLayer>> message_layers;  // size T
  DenseLayer fc1, fc2;

  int num_classes() const { return static_cast<int>(fc2.W.rows()); }
  Index input_dim() const { return message_layers.front().front().W.cols(); }
  Index hidden_dim() const { return fc1.W.cols(); }
};

struct Prediction {
  Vector logits;
  Vector probabilities;
  int predicted_class = -1;
};

/// Activations cached by a forward pass, consumed by the backward pass.
struct ForwardCache {
  Matrix base_conn;
  std::vector<Matrix> masked_conn;           // per layer
  std::vector<Matrix> x;                     // X^0..X^T
  std::vector<Matrix> aggregated;            // S^t
  std::vector<std::vector<Matrix>> stage_pre;  // per layer, per stage
  Vector pooled;
  Vector fc1_pre;
  Vector fc1_post;
};

/// Per-layer aggregation matrix before masking: the normalized Laplacian
/// for GCN, the 0/1 adjacency with (1+eps) self-loops for GIN.
Matrix base_connectivity(const GnnModel& model, const Graph& g);

/// Masked forward pass in evaluation mode. The aggregation at layer t
/// scales every connectivity entry by the mask value of the matching
/// layer edge; an all-ones mask is bit-for-bit the unmasked model.
/// target_node is required for node-level readout.
Prediction forward(const GnnModel& model, const Graph& g, const EdgeMaskVector& mask,
                   int target_node = -1, ForwardCache* cache = nullptr);

/// Unmasked forward (all-ones mask).
Prediction forward(const GnnModel& model, const Graph& g, int target_node = -1);

/// Forward with the binary mask induced by a kept layer-edge set.
Prediction forward_restricted(const GnnModel& model, const Graph& g,
                              const LayerEdgeSet& kept, int target_node = -1);

struct LossSpec {
  enum class Kind { Probability, LogProbability };
  int target_class = 0;
  Kind kind = Kind::LogProbability;
};

/// d loss / d mask_e for every layer edge, by reverse accumulation
/// through the masked forward. Pure given (model, graph, mask).
Vector grad_wrt_mask(const GnnModel& model, const Graph& g, const EdgeMaskVector& mask,
                     const LossSpec& spec, int target_node = -1,
                     Prediction* prediction_out = nullptr);

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  int epochs = 100;
  Real lr = 1e-3;
  Real lr_decay = 0.5;
  int decay_epoch = 500;
  int batch_size = 32;
  Optimizer optimizer = Optimizer::Sgd;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct TrainReport {
  Real train_accuracy = 0;
  Real val_accuracy = 0;
  Real test_accuracy = 0;
  int best_epoch = -1;
  std::vector<Real> epoch_losses;
};

GnnModel init_model(LayerKind kind, ReadoutKind readout, int T, Index input_dim,
                    Index hidden, int num_classes, Real dropout, std::uint64_t seed);

/// Cross-entropy training with best-validation checkpointing. The model
/// is left at the best-validation weights. Aborts on non-finite loss.
TrainReport train(GnnModel& model, const Dataset& data, const TrainConfig& cfg);

Real dataset_accuracy(const GnnModel& model, const Dataset& data,
                      const std::vector<Index>& sample_idx);

nlohmann::json model_to_json(const GnnModel& model);
GnnModel model_from_json(const nlohmann::json& j);

}  // namespace flowx
