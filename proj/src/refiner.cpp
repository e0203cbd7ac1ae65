#include "flowx/refiner.hpp"

#include "flowx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace flowx {

Vector score_flows(const FlowScoreTable& table, const Vector& w) {
  if (w.size() != table.scores.cols()) {
    std::ostringstream os;
    os << "weight vector length " << w.size() << " does not match |A| = " << table.scores.cols();
    throw DataError(os.str());
  }
  return table.scores * w;
}

Vector aggregate_to_layer_edges(const Vector& flow_scores, const FlowIndex& index) {
  if (flow_scores.size() != index.flow_count())
    throw DataError("flow score vector does not cover all flows");
  Vector out = Vector::Zero(index.universe_size());
  for (Index e = 0; e < index.universe_size(); ++e) {
    Real total = 0.0;
    for (Index k : index.postings[static_cast<std::size_t>(e)]) total += flow_scores(k);
    out(e) = total;
  }
  return out;
}

Vector aggregate_backward(const Vector& grad_edges, const FlowIndex& index) {
  Vector out = Vector::Zero(index.flow_count());
  for (Index e = 0; e < index.universe_size(); ++e) {
    const Real ge = grad_edges(e);
    if (ge == 0.0) continue;
    for (Index k : index.postings[static_cast<std::size_t>(e)]) out(k) += ge;
  }
  return out;
}

namespace {

Index first_argmin(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) < v(best)) best = i;
  return best;
}

Index first_argmax(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

}  // namespace

Vector minmax_normalize(const Vector& v) {
  if (v.size() == 0) return v;
  const Real lo = v.minCoeff();
  const Real hi = v.maxCoeff();
  if (hi == lo) return Vector::Constant(v.size(), 0.5);
  return (v.array() - lo) / (hi - lo);
}

Vector minmax_backward(const Vector& v, const Vector& grad_out) {
  const Index imin = first_argmin(v);
  const Index imax = first_argmax(v);
  const Real lo = v(imin);
  const Real hi = v(imax);
  if (hi == lo) return Vector::Zero(v.size());
  const Real den = hi - lo;
  Vector grad = grad_out / den;
  const Real total = grad_out.sum() / den;
  Real weighted = 0.0;  // sum_i g_i * y_i / den
  for (Index i = 0; i < v.size(); ++i) weighted += grad_out(i) * (v(i) - lo);
  weighted /= den * den;
  grad(imin) += -total + weighted;
  grad(imax) -= weighted;
  return grad;
}

Vector exponential_redistribution(const Vector& s_hat, Real r, RedistributionCache* cache) {
  if (r < 1.0) throw DataError("redistribution exponent must be >= 1");
  Vector normalized = minmax_normalize(s_hat);
  Vector powered = normalized.array().pow(r);
  Vector output = minmax_normalize(powered);
  if (cache) {
    cache->normalized = normalized;
    cache->powered = powered;
    cache->output = output;
  }
  return output;
}

Vector exponential_redistribution_backward(const Vector& s_hat, const RedistributionCache& cache,
                                           Real r, const Vector& grad_out) {
  Vector g_pow = minmax_backward(cache.powered, grad_out);
  Vector g_norm = g_pow.array() * r * cache.normalized.array().pow(r - 1.0);
  return minmax_backward(s_hat, g_norm);
}

namespace {

struct PipelineState {
  Vector flow_scores;
  Vector s_hat;
  RedistributionCache redis;
  Vector mask;  // 1 - M, the kept weights
  Prediction pred;
  Real loss = 0.0;
};

/// Shared forward for FlowX refinement and the dagger ablation. For the
/// dagger variant the flow scores are the trainable state and the
/// redistribution stage is a single min-max.
PipelineState run_pipeline(const GnnModel& model, const Graph& g, const FlowIndex& index,
                           const Vector& flow_scores, Real r, bool use_redistribution,
                           int target_class, int target_node) {
  PipelineState st;
  st.flow_scores = flow_scores;
  st.s_hat = aggregate_to_layer_edges(flow_scores, index);
  Vector m = use_redistribution ? exponential_redistribution(st.s_hat, r, &st.redis)
                                : minmax_normalize(st.s_hat);
  st.mask = Vector::Ones(m.size()) - m;
  st.pred = forward(model, g, st.mask, target_node);
  st.loss = std::log(std::max(st.pred.probabilities(target_class), 1e-300));
  return st;
}

/// Gradient of log p_y w.r.t. the flow scores, chaining through the
/// redistribution (or plain min-max) and the masked forward.
Vector pipeline_flow_grad(const GnnModel& model, const Graph& g, const FlowIndex& index,
                          const PipelineState& st, Real r, bool use_redistribution,
                          int target_class, int target_node) {
  LossSpec spec;
  spec.target_class = target_class;
  spec.kind = LossSpec::Kind::LogProbability;
  const Vector d_mask = grad_wrt_mask(model, g, st.mask, spec, target_node);
  const Vector d_m = -d_mask;  // mask = 1 - M
  Vector d_s_hat = use_redistribution
                       ? exponential_redistribution_backward(st.s_hat, st.redis, r, d_m)
                       : minmax_backward(st.s_hat, d_m);
  return aggregate_backward(d_s_hat, index);
}

int resolve_target_class(const GnnModel& model, const Graph& g, int target_class,
                         int target_node) {
  if (target_class >= 0) return target_class;
  return forward(model, g, target_node).predicted_class;
}

Vector init_weights(Index size, const RefinerConfig& cfg) {
  SplitMix64 rng = SplitMix64::substream(cfg.seed, 0x7E1F);
  Vector w(size);
  if (cfg.init == WeightInit::UniformLow) {
    for (Index i = 0; i < size; ++i) w(i) = rng.uniform(0.0, cfg.init_range);
  } else {
    for (Index i = 0; i < size; ++i) w(i) = 0.5 + rng.uniform(-cfg.init_range, cfg.init_range);
  }
  return w;
}

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw DataError("cannot write trace file " + path);
    out_ << "iter,loss,masked_prob_y,w_norm\n";
  }
  void row(int iter, Real loss, Real prob, Real norm) {
    if (!out_.is_open()) return;
    out_ << iter << ',' << loss << ',' << prob << ',' << norm << '\n';
  }

 private:
  std::ofstream out_;
};

void check_finite_loss(Real loss, int iter, Real w_norm) {
  if (std::isfinite(loss)) return;
  std::ostringstream os;
  os << "refinement loss became non-finite at iteration " << iter << " (|w| = " << w_norm << ")";
  throw NumericalError(os.str());
}

}  // namespace

Real refiner_loss(const GnnModel& model, const Graph& g, const FlowScoreTable& table,
                  const FlowIndex& index, const Vector& w, Real r, int target_class,
                  int target_node) {
  const Vector s = score_flows(table, w);
  return run_pipeline(model, g, index, s, r, true, target_class, target_node).loss;
}

Vector refiner_loss_grad(const GnnModel& model, const Graph& g, const FlowScoreTable& table,
                         const FlowIndex& index, const Vector& w, Real r, int target_class,
                         int target_node, Real* loss_out) {
  const Vector s = score_flows(table, w);
  const PipelineState st =
      run_pipeline(model, g, index, s, r, true, target_class, target_node);
  if (loss_out) *loss_out = st.loss;
  const Vector d_flow = pipeline_flow_grad(model, g, index, st, r, true, target_class, target_node);
  return table.scores.transpose() * d_flow;
}

RefinerOutcome train_refiner(const GnnModel& model, const Graph& g, const FlowScoreTable& table,
                             const FlowIndex& index, const RefinerConfig& cfg,
                             int target_class, int target_node) {
  if (cfg.iterations < 0) throw DataError("refiner iterations must be >= 0");
  const int y = resolve_target_class(model, g, target_class, target_node);
  Vector w = init_weights(table.scores.cols(), cfg);
  TraceWriter trace(cfg.trace_path);
  RefinerOutcome out;
  bool warned_constant = false;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const Vector s = score_flows(table, w);
    const PipelineState st = run_pipeline(model, g, index, s, cfg.r, true, y, target_node);
    check_finite_loss(st.loss, iter, w.norm());
    if (!warned_constant && st.s_hat.maxCoeff() == st.s_hat.minCoeff()) {
      std::cerr << "flowx: layer-edge scores are constant at iteration " << iter
                << "; mask degenerates to 0.5\n";
      warned_constant = true;
    }
    out.losses.push_back(st.loss);
    trace.row(iter, st.loss, st.pred.probabilities(y), w.norm());
    const Vector d_flow =
        pipeline_flow_grad(model, g, index, st, cfg.r, true, y, target_node);
    const Vector gw = table.scores.transpose() * d_flow;
    w -= cfg.learning_rate * gw;
  }
  out.w = w;
  out.result.method = "flowx";
  out.result.target_class = y;
  out.result.seed = cfg.seed;
  out.result.flow_scores = score_flows(table, w);
  out.result.layer_edge_scores = aggregate_to_layer_edges(out.result.flow_scores, index);
  return out;
}

RefinerOutcome flowx_dagger(const GnnModel& model, const Graph& g, const FlowIndex& index,
                            const RefinerConfig& cfg, int target_class, int target_node) {
  if (cfg.iterations < 0) throw DataError("refiner iterations must be >= 0");
  const int y = resolve_target_class(model, g, target_class, target_node);
  Vector s = init_weights(index.flow_count(), cfg);
  TraceWriter trace(cfg.trace_path);
  RefinerOutcome out;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const PipelineState st = run_pipeline(model, g, index, s, cfg.r, false, y, target_node);
    check_finite_loss(st.loss, iter, s.norm());
    out.losses.push_back(st.loss);
    trace.row(iter, st.loss, st.pred.probabilities(y), s.norm());
    const Vector gs = pipeline_flow_grad(model, g, index, st, cfg.r, false, y, target_node);
    s -= cfg.learning_rate * gs;
  }
  out.w = s;
  out.result.method = "flowx-dagger";
  out.result.target_class = y;
  out.result.seed = cfg.seed;
  out.result.flow_scores = s;
  out.result.layer_edge_scores = aggregate_to_layer_edges(s, index);
  return out;
}

}  // namespace flowx
