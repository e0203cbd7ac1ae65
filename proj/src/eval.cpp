#include "flowx/eval.hpp"

#include "flowx/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace flowx {

Vector flow_to_edge_scores(const Vector& flow_scores, const FlowIndex& index, const Graph& g) {
  const Vector per_layer = aggregate_to_layer_edges(flow_scores, index);
  const Index e = g.edge_count();
  Vector out = Vector::Zero(e);
  for (int t = 0; t < index.T; ++t)
    out += per_layer.segment(static_cast<Index>(t) * e, e);
  return out;
}

Selection select_topk(const Vector& scores, Real sparsity_level) {
  if (sparsity_level < 0.0 || sparsity_level > 1.0)
    throw DataError("target sparsity must lie in [0, 1]");
  const Index n = scores.size();
  const Index k = static_cast<Index>(
      std::floor((1.0 - sparsity_level) * static_cast<Real>(n) + 1e-9));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores(a) > scores(b); });
  Selection mask(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < k; ++i) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  return mask;
}

Real fidelity_drop(const GnnModel& model, const Graph& g, const Selection& selected_edges,
                   int target_node) {
  if (static_cast<Index>(selected_edges.size()) != g.edge_count()) {
    std::ostringstream os;
    os << "selection length " << selected_edges.size() << " does not match edge count "
       << g.edge_count();
    throw DataError(os.str());
  }
  const Prediction original = forward(model, g, target_node);
  Vector mask = full_mask(g, model.T);
  const Index e = g.edge_count();
  for (Index i = 0; i < e; ++i) {
    if (!selected_edges[static_cast<std::size_t>(i)]) continue;
    for (int t = 0; t < model.T; ++t) mask(static_cast<Index>(t) * e + i) = 0.0;
  }
  const Prediction masked = forward(model, g, mask, target_node);
  const int y = original.predicted_class;
  return original.probabilities(y) - masked.probabilities(y);
}

Real fidelity(const GnnModel& model, const std::vector<const Graph*>& graphs,
              const std::vector<Selection>& selections, const std::vector<int>& target_nodes) {
  if (graphs.size() != selections.size())
    throw DataError("fidelity needs one selection per graph");
  if (graphs.empty()) return 0.0;
  Real total = 0.0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const int node = target_nodes.empty() ? -1 : target_nodes[i];
    total += fidelity_drop(model, *graphs[i], selections[i], node);
  }
  return total / static_cast<Real>(graphs.size());
}

Real sparsity(const std::vector<Selection>& selections) {
  if (selections.empty()) return 0.0;
  Real total = 0.0;
  for (const auto& sel : selections) {
    if (sel.empty()) throw DataError("empty selection mask");
    Index ones = 0;
    for (auto v : sel) ones += v ? 1 : 0;
    total += 1.0 - static_cast<Real>(ones) / static_cast<Real>(sel.size());
  }
  return total / static_cast<Real>(selections.size());
}

Real accuracy(const Graph& g, const Selection& selected_edges) {
  if (g.ground_truth.empty()) throw DataError("graph carries no ground-truth elements");
  if (static_cast<Index>(selected_edges.size()) != g.edge_count())
    throw DataError("selection length does not match edge count");
  Index hits = 0;
  for (const auto& [u, v] : g.ground_truth) {
    bool hit = false;
    const int fwd = g.edge_ordinal(u, v);
    if (fwd >= 0 && selected_edges[static_cast<std::size_t>(fwd)]) hit = true;
    const int rev = g.edge_ordinal(v, u);
    if (!hit && rev >= 0 && selected_edges[static_cast<std::size_t>(rev)]) hit = true;
    if (hit) ++hits;
  }
  return static_cast<Real>(hits) / static_cast<Real>(g.ground_truth.size());
}

Method method_from_name(const std::string& name) {
  if (name == "flowx") return Method::FlowX;
  if (name == "flowx-star") return Method::FlowXStar;
  if (name == "flowx-dagger") return Method::FlowXDagger;
  if (name == "random") return Method::Random;
  throw DataError("unknown explanation method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::FlowX: return "flowx";
    case Method::FlowXStar: return "flowx-star";
    case Method::FlowXDagger: return "flowx-dagger";
    case Method::Random: return "random";
  }
  return "unknown";
}

namespace {

ExplanationResult random_explanation(const Graph& g, std::uint64_t seed) {
  SplitMix64 rng = SplitMix64::substream(seed, 0xBADD);
  ExplanationResult res;
  res.method = "random";
  res.seed = seed;
  res.input_edge_scores = Vector::Zero(g.edge_count());
  for (Index i = 0; i < g.edge_count(); ++i) res.input_edge_scores(i) = rng.uniform();
  return res;
}

}  // namespace

ExplanationResult explain_with_table(const GnnModel& model, const Graph& g,
                                     const FlowIndex& index, const FlowScoreTable& table,
                                     const ExplainConfig& cfg, int target_node) {
  ExplanationResult res;
  switch (cfg.method) {
    case Method::FlowX: {
      RefinerOutcome out =
          train_refiner(model, g, table, index, cfg.refiner, table.target_class, target_node);
      res = std::move(out.result);
      break;
    }
    case Method::FlowXStar: {
      res.method = "flowx-star";
      res.target_class = table.target_class;
      res.seed = table.seed;
      res.flow_scores = flowx_star(table);
      res.layer_edge_scores = aggregate_to_layer_edges(res.flow_scores, index);
      break;
    }
    default:
      throw DataError("explain_with_table supports only table-driven methods");
  }
  res.input_edge_scores = flow_to_edge_scores(res.flow_scores, index, g);
  return res;
}

ExplanationResult explain(const GnnModel& model, const Graph& g, const ExplainConfig& cfg,
                          int target_node) {
  if (cfg.method == Method::Random) return random_explanation(g, cfg.sampler.seed);
  FlowIndex index = enumerate_flows(g, model.T, cfg.cap);
  if (cfg.method == Method::FlowXDagger) {
    RefinerOutcome out = flowx_dagger(model, g, index, cfg.refiner, -1, target_node);
    ExplanationResult res = std::move(out.result);
    res.input_edge_scores = flow_to_edge_scores(res.flow_scores, index, g);
    return res;
  }
  const FlowScoreTable table = sample_marginal_contributions(model, g, index, cfg.sampler);
  return explain_with_table(model, g, index, table, cfg, target_node);
}

std::vector<Real> default_sparsity_levels() { return {0.5, 0.6, 0.7, 0.8, 0.9}; }

std::vector<SweepSample> draw_sweep_samples(const Dataset& data, int sample_n,
                                            std::uint64_t seed) {
  std::vector<SweepSample> pool;
  if (data.task == Task::GraphClassification) {
    for (Index idx : data.test_idx) pool.push_back({idx, -1});
  } else {
    // node tasks: explain motif nodes of the single graph
    const Graph& g = data.graphs.front();
    for (Index v = 0; v < g.n; ++v) {
      if (!g.node_labels.empty() && g.node_labels[static_cast<std::size_t>(v)] == 0) continue;
      pool.push_back({0, static_cast<int>(v)});
    }
  }
  SplitMix64 rng = SplitMix64::substream(seed, 0x5A3);
  rng.shuffle(pool);
  if (sample_n > 0 && static_cast<std::size_t>(sample_n) < pool.size())
    pool.resize(static_cast<std::size_t>(sample_n));
  return pool;
}

SweepResult sparsity_sweep(const GnnModel& model, const Dataset& data,
                           const std::vector<SweepSample>& samples, const ExplainConfig& cfg,
                           const std::vector<Real>& levels, bool with_accuracy, int jobs) {
  const std::size_t n = samples.size();
  struct PerSample {
    bool ok = false;
    std::vector<Real> drops;  // one per level
    Real acc = -1.0;
  };
  std::vector<PerSample> rows(n);

  auto run_sample = [&](std::size_t i) {
    const SweepSample& sample = samples[i];
    const Graph& g = data.graphs[static_cast<std::size_t>(sample.graph_index)];
    PerSample row;
    try {
      ExplainConfig local = cfg;
      // one substream per sample: schedule-independent determinism
      const std::uint64_t sample_seed =
          mix64(cfg.sampler.seed ^ mix64(static_cast<std::uint64_t>(i) + 0x9E37));
      local.sampler.seed = sample_seed;
      local.refiner.seed = sample_seed;
      const ExplanationResult res = explain(model, g, local, sample.target_node);
      row.drops.reserve(levels.size());
      for (Real level : levels) {
        const Selection sel = select_topk(res.input_edge_scores, level);
        row.drops.push_back(fidelity_drop(model, g, sel, sample.target_node));
      }
      if (with_accuracy && !g.ground_truth.empty()) {
        row.acc = accuracy(g, select_topk(res.input_edge_scores, 0.9));
      }
      row.ok = true;
    } catch (const std::exception&) {
      row.ok = false;
    }
    rows[i] = std::move(row);
  };

  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_sample(i);
  } else {
    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= n) return;
        run_sample(i);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult result;
  result.method = method_name(cfg.method);
  result.n_samples = static_cast<int>(n);
  Real acc_total = 0.0;
  int acc_count = 0;
  std::vector<Real> level_totals(levels.size(), 0.0);
  int ok_count = 0;
  for (const auto& row : rows) {
    if (!row.ok) {
      ++result.n_failed;
      continue;
    }
    ++ok_count;
    for (std::size_t l = 0; l < levels.size(); ++l) level_totals[l] += row.drops[l];
    if (row.acc >= 0.0) {
      acc_total += row.acc;
      ++acc_count;
    }
  }
  Real mean_total = 0.0;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    SweepLevel lvl;
    lvl.sparsity_level = levels[l];
    lvl.n_samples = ok_count;
    lvl.mean_fidelity = ok_count ? level_totals[l] / static_cast<Real>(ok_count) : 0.0;
    mean_total += lvl.mean_fidelity;
    result.levels.push_back(lvl);
  }
  result.mean_fidelity = levels.empty() ? 0.0 : mean_total / static_cast<Real>(levels.size());
  if (acc_count > 0) result.mean_accuracy = acc_total / static_cast<Real>(acc_count);
  return result;
}

}  // namespace flowx
