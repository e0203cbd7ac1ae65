#include "flowx/gnn.hpp"

#include "flowx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace flowx {

namespace {

Vector softmax(const Vector& logits) {
  const Real m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

int argmax_index(const Vector& v) {
  int best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

Prediction make_prediction(const Vector& logits) {
  Prediction p;
  p.logits = logits;
  p.probabilities = softmax(logits);
  p.predicted_class = argmax_index(p.probabilities);
  return p;
}

Matrix masked_connectivity(const Matrix& base, const Graph& g, const EdgeMaskVector& mask,
                           int layer) {
  Matrix mc = base;
  const Index e = g.edge_count();
  const Index offset = static_cast<Index>(layer - 1) * e;
  for (Index i = 0; i < e; ++i) {
    const auto& [src, dst] = g.edges[static_cast<std::size_t>(i)];
    mc(src, dst) = base(src, dst) * mask(offset + i);
  }
  return mc;
}

/// Runs aggregation + dense stages for all layers; fills the cache with
/// X^0..X^T, per-stage preactivations, and the masked connectivities.
void message_pass(const GnnModel& model, const Graph& g, const EdgeMaskVector& mask,
                  ForwardCache& cache) {
  if (mask.size() != 0 && mask.size() != g.edge_count() * model.T) {
    std::ostringstream os;
    os << "mask length " << mask.size() << " does not match |E|*T = "
       << g.edge_count() * model.T;
    throw DataError(os.str());
  }
  if (g.features.rows() != model.input_dim()) {
    std::ostringstream os;
    os << "feature dim " << g.features.rows() << " does not match model input dim "
       << model.input_dim();
    throw DataError(os.str());
  }
  cache.base_conn = base_connectivity(model, g);
  cache.masked_conn.clear();
  cache.aggregated.clear();
  cache.stage_pre.assign(static_cast<std::size_t>(model.T), {});
  cache.x.clear();
  cache.x.push_back(g.features);
  for (int t = 1; t <= model.T; ++t) {
    Matrix mc = mask.size() == 0 ? cache.base_conn
                                 : masked_connectivity(cache.base_conn, g, mask, t);
    Matrix s = cache.x.back() * mc;
    cache.masked_conn.push_back(std::move(mc));
    cache.aggregated.push_back(s);
    Matrix h = std::move(s);
    for (const DenseLayer& stage : model.message_layers[static_cast<std::size_t>(t - 1)]) {
      Matrix pre = (stage.W * h).colwise() + stage.b;
      cache.stage_pre[static_cast<std::size_t>(t - 1)].push_back(pre);
      h = pre.cwiseMax(0.0);
    }
    cache.x.push_back(std::move(h));
  }
}

Vector readout_vector(const GnnModel& model, const Graph& g, const ForwardCache& cache,
                      int target_node) {
  if (model.readout == ReadoutKind::MeanPool) return cache.x.back().rowwise().mean();
  if (target_node < 0 || target_node >= g.n)
    throw DataError("node-level readout requires a valid target node");
  return cache.x.back().col(target_node);
}

Vector classify(const GnnModel& model, const Vector& h, ForwardCache* cache) {
  Vector pre = model.fc1.W * h + model.fc1.b;
  Vector post = pre.cwiseMax(0.0);
  if (cache) {
    cache->pooled = h;
    cache->fc1_pre = pre;
    cache->fc1_post = post;
  }
  return model.fc2.W * post + model.fc2.b;
}

struct ParamBlock {
  Real* data;
  Index size;
};

std::vector<ParamBlock> param_blocks(GnnModel& m) {
  std::vector<ParamBlock> blocks;
  for (auto& layer : m.message_layers) {
    for (auto& stage : layer) {
      blocks.push_back({stage.W.data(), stage.W.size()});
      blocks.push_back({stage.b.data(), stage.b.size()});
    }
  }
  blocks.push_back({m.fc1.W.data(), m.fc1.W.size()});
  blocks.push_back({m.fc1.b.data(), m.fc1.b.size()});
  blocks.push_back({m.fc2.W.data(), m.fc2.W.size()});
  blocks.push_back({m.fc2.b.data(), m.fc2.b.size()});
  return blocks;
}

GnnModel zero_like(const GnnModel& m) {
  GnnModel z = m;
  for (auto blk : param_blocks(z)) std::fill(blk.data, blk.data + blk.size, 0.0);
  return z;
}

/// Backpropagates dX^T through the message-passing stack. Accumulates
/// parameter gradients into `grads` and mask gradients into `mask_grad`
/// when non-null.
void message_backward(const GnnModel& model, const Graph& g, const ForwardCache& cache,
                      Matrix dx, GnnModel* grads, Vector* mask_grad) {
  const Index e = g.edge_count();
  for (int t = model.T; t >= 1; --t) {
    const std::size_t li = static_cast<std::size_t>(t - 1);
    const auto& stages = model.message_layers[li];
    for (int s = static_cast<int>(stages.size()) - 1; s >= 0; --s) {
      const Matrix& pre = cache.stage_pre[li][static_cast<std::size_t>(s)];
      Matrix dz = (pre.array() > 0.0).select(dx, Matrix::Zero(dx.rows(), dx.cols()));
      const Matrix input = s == 0
                               ? cache.aggregated[li]
                               : cache.stage_pre[li][static_cast<std::size_t>(s - 1)].cwiseMax(0.0);
      if (grads) {
        auto& gs = grads->message_layers[li][static_cast<std::size_t>(s)];
        gs.W += dz * input.transpose();
        gs.b += dz.rowwise().sum();
      }
      dx = stages[static_cast<std::size_t>(s)].W.transpose() * dz;
    }
    // dx is now dS^t
    if (mask_grad) {
      const Matrix& xin = cache.x[li];
      const Index offset = static_cast<Index>(t - 1) * e;
      for (Index i = 0; i < e; ++i) {
        const auto& [src, dst] = g.edges[static_cast<std::size_t>(i)];
        const Real dconn = xin.col(src).dot(dx.col(dst));
        (*mask_grad)(offset + i) += dconn * cache.base_conn(src, dst);
      }
    }
    if (t > 1) dx = dx * cache.masked_conn[li].transpose();
  }
}

Vector classifier_backward_single(const GnnModel& model, const ForwardCache& cache,
                                  const Vector& dlogits, GnnModel* grads) {
  Vector dpost = model.fc2.W.transpose() * dlogits;
  Vector dpre =
      (cache.fc1_pre.array() > 0.0).select(dpost, Vector::Zero(dpost.size()));
  if (grads) {
    grads->fc2.W += dlogits * cache.fc1_post.transpose();
    grads->fc2.b += dlogits;
    grads->fc1.W += dpre * cache.pooled.transpose();
    grads->fc1.b += dpre;
  }
  return model.fc1.W.transpose() * dpre;
}

Matrix node_logits_all(const GnnModel& model, const Graph& g, Matrix* fc1_pre_out = nullptr,
                       ForwardCache* cache_out = nullptr) {
  ForwardCache local;
  ForwardCache& cache = cache_out ? *cache_out : local;
  message_pass(model, g, Vector(), cache);
  Matrix pre = (model.fc1.W * cache.x.back()).colwise() + model.fc1.b;
  if (fc1_pre_out) *fc1_pre_out = pre;
  Matrix post = pre.cwiseMax(0.0);
  return (model.fc2.W * post).colwise() + model.fc2.b;
}

Real glorot_limit(Index fan_in, Index fan_out) {
  return std::sqrt(6.0 / static_cast<Real>(fan_in + fan_out));
}

DenseLayer init_dense(Index out, Index in, SplitMix64& rng) {
  DenseLayer d;
  d.W = Matrix::Zero(out, in);
  const Real limit = glorot_limit(in, out);
  for (Index c = 0; c < in; ++c)
    for (Index r = 0; r < out; ++r) d.W(r, c) = rng.uniform(-limit, limit);
  // nonzero bias init: with constant input features a zero-bias ReLU stack
  // collapses every layer to a rank-1 map of the degree profile
  const Real blimit = 1.0 / std::sqrt(static_cast<Real>(in));
  d.b = Vector::Zero(out);
  for (Index r = 0; r < out; ++r) d.b(r) = rng.uniform(-blimit, blimit);
  return d;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  auto data = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  Matrix m(rows, cols);
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols)
    throw DataError("checkpoint matrix size mismatch");
  std::size_t k = 0;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data.at(k++).get<Real>();
  return m;
}

nlohmann::json dense_to_json(const DenseLayer& d) {
  return {{"W", matrix_to_json(d.W)}, {"b", matrix_to_json(d.b)}};
}

DenseLayer dense_from_json(const nlohmann::json& j) {
  DenseLayer d;
  d.W = matrix_from_json(j.at("W"));
  Matrix b = matrix_from_json(j.at("b"));
  d.b = b.col(0);
  return d;
}

}  // namespace

Matrix base_connectivity(const GnnModel& model, const Graph& g) {
  return model.kind == LayerKind::Gcn ? gcn_connectivity(g)
                                      : binary_adjacency(g, 1.0 + model.gin_eps);
}

Prediction forward(const GnnModel& model, const Graph& g, const EdgeMaskVector& mask,
                   int target_node, ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  message_pass(model, g, mask, c);
  const Vector h = readout_vector(model, g, c, target_node);
  return make_prediction(classify(model, h, &c));
}

Prediction forward(const GnnModel& model, const Graph& g, int target_node) {
  return forward(model, g, full_mask(g, model.T), target_node);
}

Prediction forward_restricted(const GnnModel& model, const Graph& g,
                              const LayerEdgeSet& kept, int target_node) {
  if (kept.universe_size != g.edge_count() * model.T)
    throw DataError("kept set universe does not match (graph, T)");
  return forward(model, g, mask_from_kept(kept), target_node);
}

Vector grad_wrt_mask(const GnnModel& model, const Graph& g, const EdgeMaskVector& mask,
                     const LossSpec& spec, int target_node, Prediction* prediction_out) {
  if (spec.target_class < 0 || spec.target_class >= model.num_classes())
    throw DataError("loss target class out of range");
  ForwardCache cache;
  Prediction pred = forward(model, g, mask, target_node, &cache);
  const Vector& p = pred.probabilities;
  const int y = spec.target_class;
  Vector dlogits(p.size());
  if (spec.kind == LossSpec::Kind::LogProbability) {
    // d log p_y / d z_k = [k == y] - p_k
    dlogits = -p;
    dlogits(y) += 1.0;
  } else {
    // d p_y / d z_k = p_y ([k == y] - p_k)
    dlogits = -p(y) * p;
    dlogits(y) += p(y);
  }
  Vector dh = classifier_backward_single(model, cache, dlogits, nullptr);
  Matrix dx;
  if (model.readout == ReadoutKind::MeanPool) {
    dx = (dh / static_cast<Real>(g.n)).replicate(1, g.n);
  } else {
    dx = Matrix::Zero(dh.size(), g.n);
    dx.col(target_node) = dh;
  }
  Vector mask_grad = Vector::Zero(g.edge_count() * model.T);
  message_backward(model, g, cache, std::move(dx), nullptr, &mask_grad);
  if (prediction_out) *prediction_out = pred;
  return mask_grad;
}

GnnModel init_model(LayerKind kind, ReadoutKind readout, int T, Index input_dim,
                    Index hidden, int num_classes, Real dropout, std::uint64_t seed) {
  if (T < 1) throw DataError("model needs at least one message-passing layer");
  GnnModel m;
  m.kind = kind;
  m.T = T;
  m.readout = readout;
  m.dropout = dropout;
  SplitMix64 rng = SplitMix64::substream(seed, 0x1217);
  for (int t = 0; t < T; ++t) {
    const Index in = t == 0 ? input_dim : hidden;
    std::vector<DenseLayer> stages;
    if (kind == LayerKind::Gcn) {
      stages.push_back(init_dense(hidden, in, rng));
    } else {
      stages.push_back(init_dense(hidden, in, rng));
      stages.push_back(init_dense(hidden, hidden, rng));
    }
    m.message_layers.push_back(std::move(stages));
  }
  m.fc1 = init_dense(hidden, hidden, rng);
  m.fc2 = init_dense(num_classes, hidden, rng);
  return m;
}

namespace {

struct AdamState {
  GnnModel m, v;
  int step = 0;
};

void apply_update(GnnModel& model, GnnModel& grads, Real lr, Optimizer opt,
                  AdamState* adam) {
  auto params = param_blocks(model);
  auto gblocks = param_blocks(grads);
  if (opt == Optimizer::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (Index k = 0; k < params[i].size; ++k) params[i].data[k] -= lr * gblocks[i].data[k];
    return;
  }
  constexpr Real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  adam->step += 1;
  const Real bc1 = 1.0 - std::pow(beta1, adam->step);
  const Real bc2 = 1.0 - std::pow(beta2, adam->step);
  auto mblocks = param_blocks(adam->m);
  auto vblocks = param_blocks(adam->v);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Index k = 0; k < params[i].size; ++k) {
      const Real gk = gblocks[i].data[k];
      Real& mk = mblocks[i].data[k];
      Real& vk = vblocks[i].data[k];
      mk = beta1 * mk + (1.0 - beta1) * gk;
      vk = beta2 * vk + (1.0 - beta2) * gk * gk;
      params[i].data[k] -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + eps);
    }
  }
}

int sample_label(const Dataset& data, Index idx) {
  if (data.task == Task::GraphClassification) {
    const auto& label = data.graphs[static_cast<std::size_t>(idx)].graph_label;
    if (!label) throw DataError("graph sample is missing a label");
    return *label;
  }
  return data.graphs.front().node_labels[static_cast<std::size_t>(idx)];
}

}  // namespace

Real dataset_accuracy(const GnnModel& model, const Dataset& data,
                      const std::vector<Index>& sample_idx) {
  if (sample_idx.empty()) return 0.0;
  Index hits = 0;
  if (data.task == Task::GraphClassification) {
    for (Index idx : sample_idx) {
      const Graph& g = data.graphs[static_cast<std::size_t>(idx)];
      if (forward(model, g).predicted_class == sample_label(data, idx)) ++hits;
    }
  } else {
    const Graph& g = data.graphs.front();
    Matrix logits = node_logits_all(model, g);
    for (Index idx : sample_idx) {
      Vector col = logits.col(idx);
      if (argmax_index(col) == sample_label(data, idx)) ++hits;
    }
  }
  return static_cast<Real>(hits) / static_cast<Real>(sample_idx.size());
}

TrainReport train(GnnModel& model, const Dataset& data, const TrainConfig& cfg) {
  if (data.train_idx.empty() || data.val_idx.empty() || data.test_idx.empty())
    throw DataError("dataset has no recorded train/val/test split");
  TrainReport report;
  GnnModel best = model;
  Real best_val = -1.0;
  AdamState adam{zero_like(model), zero_like(model), 0};
  Real lr = cfg.lr;
  const Real keep = 1.0 - model.dropout;

  std::vector<Index> order = data.train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == cfg.decay_epoch) lr *= cfg.lr_decay;
    SplitMix64 rng = SplitMix64::substream(cfg.seed, 0xE90C + static_cast<std::uint64_t>(epoch));
    Real epoch_loss = 0.0;
    Index loss_terms = 0;

    if (data.task == Task::GraphClassification) {
      rng.shuffle(order);
      const Index bs = std::max<Index>(1, cfg.batch_size);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(bs)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(bs));
        GnnModel grads = zero_like(model);
        for (std::size_t i = start; i < end; ++i) {
          const Graph& g = data.graphs[static_cast<std::size_t>(order[i])];
          const int label = sample_label(data, order[i]);
          ForwardCache cache;
          message_pass(model, g, Vector(), cache);
          Vector h = readout_vector(model, g, cache, -1);
          Vector pre = model.fc1.W * h + model.fc1.b;
          Vector post = pre.cwiseMax(0.0);
          Vector drop = Vector::Ones(post.size());
          if (model.dropout > 0.0) {
            for (Index k = 0; k < drop.size(); ++k)
              drop(k) = rng.uniform() < keep ? 1.0 / keep : 0.0;
          }
          Vector dropped = post.cwiseProduct(drop);
          Vector logits = model.fc2.W * dropped + model.fc2.b;
          Vector p = softmax(logits);
          const Real loss = -std::log(std::max(p(label), 1e-300));
          if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "non-finite loss at epoch " << epoch << ", sample " << order[i];
            throw NumericalError(os.str());
          }
          epoch_loss += loss;
          ++loss_terms;
          Vector dlogits = p;
          dlogits(label) -= 1.0;
          const Real scale = 1.0 / static_cast<Real>(end - start);
          dlogits *= scale;
          grads.fc2.W += dlogits * dropped.transpose();
          grads.fc2.b += dlogits;
          Vector ddropped = model.fc2.W.transpose() * dlogits;
          Vector dpost = ddropped.cwiseProduct(drop);
          Vector dpre = (pre.array() > 0.0).select(dpost, Vector::Zero(dpost.size()));
          grads.fc1.W += dpre * h.transpose();
          grads.fc1.b += dpre;
          Vector dh = model.fc1.W.transpose() * dpre;
          Matrix dx = (dh / static_cast<Real>(g.n)).replicate(1, g.n);
          message_backward(model, g, cache, std::move(dx), &grads, nullptr);
        }
        apply_update(model, grads, lr, cfg.optimizer, &adam);
      }
    } else {
      const Graph& g = data.graphs.front();
      ForwardCache cache;
      Matrix fc1_pre;
      GnnModel grads = zero_like(model);
      message_pass(model, g, Vector(), cache);
      fc1_pre = (model.fc1.W * cache.x.back()).colwise() + model.fc1.b;
      Matrix post = fc1_pre.cwiseMax(0.0);
      Matrix drop = Matrix::Ones(post.rows(), post.cols());
      if (model.dropout > 0.0) {
        for (Index c = 0; c < drop.cols(); ++c)
          for (Index r = 0; r < drop.rows(); ++r)
            drop(r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
      }
      Matrix dropped = post.cwiseProduct(drop);
      Matrix logits = (model.fc2.W * dropped).colwise() + model.fc2.b;
      Matrix dlogits = Matrix::Zero(logits.rows(), logits.cols());
      const Real scale = 1.0 / static_cast<Real>(data.train_idx.size());
      for (Index idx : data.train_idx) {
        Vector p = softmax(logits.col(idx));
        const int label = sample_label(data, idx);
        const Real loss = -std::log(std::max(p(label), 1e-300));
        if (!std::isfinite(loss)) {
          std::ostringstream os;
          os << "non-finite loss at epoch " << epoch << ", node " << idx;
          throw NumericalError(os.str());
        }
        epoch_loss += loss;
        ++loss_terms;
        Vector d = p * scale;
        d(label) -= scale;
        dlogits.col(idx) = d;
      }
      grads.fc2.W += dlogits * dropped.transpose();
      grads.fc2.b += dlogits.rowwise().sum();
      Matrix ddropped = model.fc2.W.transpose() * dlogits;
      Matrix dpost = ddropped.cwiseProduct(drop);
      Matrix dpre = (fc1_pre.array() > 0.0).select(dpost, Matrix::Zero(dpost.rows(), dpost.cols()));
      grads.fc1.W += dpre * cache.x.back().transpose();
      grads.fc1.b += dpre.rowwise().sum();
      Matrix dx = model.fc1.W.transpose() * dpre;
      message_backward(model, g, cache, std::move(dx), &grads, nullptr);
      apply_update(model, grads, lr, cfg.optimizer, &adam);
    }

    report.epoch_losses.push_back(loss_terms ? epoch_loss / static_cast<Real>(loss_terms) : 0.0);
    const Real val = dataset_accuracy(model, data, data.val_idx);
    if (val > best_val) {
      best_val = val;
      best = model;
      report.best_epoch = epoch;
    }
    if (cfg.verbose) {
      std::cerr << "epoch " << epoch << " loss " << report.epoch_losses.back() << " val " << val
                << "\n";
    }
  }

  model = best;
  report.train_accuracy = dataset_accuracy(model, data, data.train_idx);
  report.val_accuracy = best_val;
  report.test_accuracy = dataset_accuracy(model, data, data.test_idx);
  return report;
}

nlohmann::json model_to_json(const GnnModel& model) {
  nlohmann::json j;
  j["layer_kind"] = model.kind == LayerKind::Gcn ? "gcn" : "gin";
  j["T"] = model.T;
  j["readout"] = model.readout == ReadoutKind::MeanPool ? "mean" : "node";
  j["gin_eps"] = model.gin_eps;
  j["dropout"] = model.dropout;
  j["dims"] = {{"input", model.input_dim()},
               {"hidden", model.hidden_dim()},
               {"classes", model.num_classes()}};
  auto layers = nlohmann::json::array();
  for (const auto& layer : model.message_layers) {
    auto stages = nlohmann::json::array();
    for (const auto& stage : layer) stages.push_back(dense_to_json(stage));
    layers.push_back(std::move(stages));
  }
  j["message_layers"] = std::move(layers);
  j["classifier"] = {{"fc1", dense_to_json(model.fc1)}, {"fc2", dense_to_json(model.fc2)}};
  return j;
}

GnnModel model_from_json(const nlohmann::json& j) {
  GnnModel m;
  const std::string kind = j.at("layer_kind").get<std::string>();
  if (kind == "gcn") {
    m.kind = LayerKind::Gcn;
  } else if (kind == "gin") {
    m.kind = LayerKind::Gin;
  } else {
    throw DataError("unknown layer_kind: " + kind);
  }
  m.T = j.at("T").get<int>();
  m.readout = j.at("readout").get<std::string>() == "mean" ? ReadoutKind::MeanPool
                                                           : ReadoutKind::NodeLevel;
  m.gin_eps = j.at("gin_eps").get<Real>();
  m.dropout = j.at("dropout").get<Real>();
  for (const auto& layer : j.at("message_layers")) {
    std::vector<DenseLayer> stages;
    for (const auto& stage : layer) stages.push_back(dense_from_json(stage));
    m.message_layers.push_back(std::move(stages));
  }
  m.fc1 = dense_from_json(j.at("classifier").at("fc1"));
  m.fc2 = dense_from_json(j.at("classifier").at("fc2"));
  if (static_cast<int>(m.message_layers.size()) != m.T)
    throw DataError("checkpoint layer count does not match T");
  return m;
}

}  // namespace flowx
