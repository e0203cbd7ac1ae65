#include "flowx/sampler.hpp"

#include "flowx/rng.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace flowx {

namespace {

struct Assignment {
  Index flow;
  Index position;
  Real value;
};

struct StepResult {
  std::vector<StepRecord> records;
  std::vector<Assignment> assignments;
};

StepResult run_step(const CoalitionGame& game, const FlowIndex& index,
                    const std::vector<Index>& perm, Real full_value) {
  const Index universe = index.universe_size();
  StepResult out;
  out.records.reserve(static_cast<std::size_t>(universe));
  std::vector<char> kept(static_cast<std::size_t>(universe), 1);
  std::vector<char> removed_flow(static_cast<std::size_t>(index.flow_count()), 0);
  Real prev = full_value;
  for (Index j = 0; j < universe; ++j) {
    const Index edge = perm[static_cast<std::size_t>(j)];
    kept[static_cast<std::size_t>(edge)] = 0;
    const Real next = game(kept);
    const Real marginal = prev - next;
    prev = next;

    Index newly = 0;
    const auto& through = index.postings[static_cast<std::size_t>(edge)];
    for (Index k : through)
      if (!removed_flow[static_cast<std::size_t>(k)]) ++newly;
    if (newly > 0) {
      const Real share = marginal / static_cast<Real>(newly);
      for (Index k : through) {
        if (removed_flow[static_cast<std::size_t>(k)]) continue;
        removed_flow[static_cast<std::size_t>(k)] = 1;
        out.assignments.push_back({k, j, share});
      }
    }
    out.records.push_back({edge, marginal, newly});
  }
  return out;
}

std::uint64_t factorial_or_throw(Index n, std::uint64_t limit) {
  std::uint64_t f = 1;
  for (Index i = 2; i <= n; ++i) {
    f *= static_cast<std::uint64_t>(i);
    if (f > limit) {
      std::ostringstream os;
      os << "exhaustive mode needs |A|! <= " << limit << ", got |A| = " << n;
      throw NumericalError(os.str());
    }
  }
  return f;
}

}  // namespace

FlowScoreTable sample_marginal_contributions(const CoalitionGame& game, Index universe,
                                             const FlowIndex& index,
                                             const SamplerConfig& cfg) {
  if (universe != index.universe_size())
    throw DataError("universe size does not match the flow index");
  if (!cfg.exhaustive && cfg.steps <= 0) throw DataError("sampler needs steps >= 1");

  std::vector<std::vector<Index>> perms;
  if (cfg.exhaustive) {
    const std::uint64_t total = factorial_or_throw(universe, 10'080);
    std::vector<Index> perm(static_cast<std::size_t>(universe));
    std::iota(perm.begin(), perm.end(), Index{0});
    perms.reserve(total);
    do {
      perms.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    perms.resize(static_cast<std::size_t>(cfg.steps));
    for (int i = 0; i < cfg.steps; ++i) {
      auto& perm = perms[static_cast<std::size_t>(i)];
      perm.resize(static_cast<std::size_t>(universe));
      std::iota(perm.begin(), perm.end(), Index{0});
      SplitMix64 stream = SplitMix64::substream(cfg.seed, static_cast<std::uint64_t>(i));
      stream.shuffle(perm);
    }
  }
  const int steps = static_cast<int>(perms.size());

  std::vector<char> all_kept(static_cast<std::size_t>(universe), 1);
  std::vector<char> none_kept(static_cast<std::size_t>(universe), 0);
  const Real full_value = game(all_kept);
  const Real empty_value = game(none_kept);

  std::vector<StepResult> results(static_cast<std::size_t>(steps));
  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    for (int i = 0; i < steps; ++i)
      results[static_cast<std::size_t>(i)] =
          run_step(game, index, perms[static_cast<std::size_t>(i)], full_value);
  } else {
    std::atomic<int> cursor{0};
    auto worker = [&]() {
      for (;;) {
        const int i = cursor.fetch_add(1);
        if (i >= steps) return;
        results[static_cast<std::size_t>(i)] =
            run_step(game, index, perms[static_cast<std::size_t>(i)], full_value);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // merge in step order so the result is identical for any worker count
  FlowScoreTable table;
  table.steps = steps;
  table.seed = cfg.seed;
  table.target_class = cfg.target_class;
  table.full_value = full_value;
  table.empty_value = empty_value;
  table.scores = Matrix::Zero(index.flow_count(), universe);
  table.counts =
      Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(index.flow_count(),
                                                                        universe);
  table.edge_marginal_mean = Vector::Zero(universe);
  table.step_log.reserve(static_cast<std::size_t>(steps));
  for (auto& res : results) {
    for (const auto& rec : res.records) table.edge_marginal_mean(rec.edge) += rec.marginal;
    for (const auto& a : res.assignments) {
      table.scores(a.flow, a.position) += a.value;
      table.counts(a.flow, a.position) += 1;
    }
    table.step_log.push_back(std::move(res.records));
  }
  table.edge_marginal_mean /= static_cast<Real>(steps);
  for (Index k = 0; k < table.scores.rows(); ++k)
    for (Index j = 0; j < table.scores.cols(); ++j)
      if (table.counts(k, j) > 0) table.scores(k, j) /= static_cast<Real>(table.counts(k, j));
  return table;
}

CoalitionGame make_model_game(const GnnModel& model, const Graph& g, int target_class,
                              int target_node, GameValue value) {
  const Index universe = g.edge_count() * model.T;
  return [&model, &g, target_class, target_node, value,
          universe](const std::vector<char>& kept) -> Real {
    if (static_cast<Index>(kept.size()) != universe)
      throw DataError("coalition size does not match the layer-edge universe");
    Vector mask(universe);
    for (Index i = 0; i < universe; ++i) mask(i) = kept[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    const Prediction pred = forward(model, g, mask, target_node);
    return value == GameValue::Probability ? pred.probabilities(target_class)
                                           : pred.logits(target_class);
  };
}

FlowScoreTable sample_marginal_contributions(const GnnModel& model, const Graph& g,
                                             const FlowIndex& index,
                                             const SamplerConfig& cfg) {
  SamplerConfig resolved = cfg;
  if (resolved.target_class < 0)
    resolved.target_class = forward(model, g, cfg.target_node).predicted_class;
  const CoalitionGame game =
      make_model_game(model, g, resolved.target_class, resolved.target_node, resolved.value);
  return sample_marginal_contributions(game, g.edge_count() * model.T, index, resolved);
}

ShapleyReport shapley_exact(const CoalitionGame& game, Index num_players) {
  if (num_players > 20) {
    std::ostringstream os;
    os << "exact Shapley enumeration is limited to 20 players, got " << num_players;
    throw NumericalError(os.str());
  }
  const std::size_t n = static_cast<std::size_t>(num_players);
  const std::size_t subsets = std::size_t{1} << n;
  std::vector<Real> value(subsets);
  std::vector<char> kept(n, 0);
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    for (std::size_t i = 0; i < n; ++i) kept[i] = (mask >> i) & 1 ? 1 : 0;
    value[mask] = game(kept);
  }

  // weight[s] = s! (n-s-1)! / n!
  std::vector<long double> fact(n + 1, 1.0L);
  for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<long double>(i);
  std::vector<Real> weight(n, 0.0);
  for (std::size_t s = 0; s + 1 <= n; ++s)
    weight[s] = static_cast<Real>(fact[s] * fact[n - s - 1] / fact[n]);

  ShapleyReport report;
  report.values = Vector::Zero(num_players);
  for (std::size_t e = 0; e < n; ++e) {
    const std::size_t bit = std::size_t{1} << e;
    Real phi = 0.0;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (mask & bit) continue;
      const int size = std::popcount(mask);
      phi += weight[static_cast<std::size_t>(size)] * (value[mask | bit] - value[mask]);
    }
    report.values(static_cast<Index>(e)) = phi;
  }
  report.full_value = value[subsets - 1];
  report.empty_value = value[0];
  return report;
}

ShapleyReport shapley_exact(const GnnModel& model, const Graph& g, int target_class,
                            int target_node, GameValue value) {
  if (target_class < 0) target_class = forward(model, g, target_node).predicted_class;
  const Index universe = g.edge_count() * model.T;
  ShapleyReport report =
      shapley_exact(make_model_game(model, g, target_class, target_node, value), universe);
  report.target_class = target_class;
  return report;
}

Vector flowx_star(const FlowScoreTable& table) {
  const Index universe = table.scores.cols();
  return table.scores * Vector::Constant(universe, 1.0 / static_cast<Real>(universe));
}

nlohmann::json table_to_json(const FlowScoreTable& table) {
  nlohmann::json j;
  j["steps"] = table.steps;
  j["seed"] = table.seed;
  j["target_class"] = table.target_class;
  j["num_flows"] = table.scores.rows();
  j["num_layer_edges"] = table.scores.cols();
  j["full_value"] = table.full_value;
  j["empty_value"] = table.empty_value;
  auto mean = nlohmann::json::array();
  for (Index e = 0; e < table.edge_marginal_mean.size(); ++e)
    mean.push_back(table.edge_marginal_mean(e));
  j["edge_marginal_mean"] = std::move(mean);
  auto entries = nlohmann::json::array();
  for (Index k = 0; k < table.scores.rows(); ++k) {
    for (Index p = 0; p < table.scores.cols(); ++p) {
      if (table.counts(k, p) > 0)
        entries.push_back({k, p, table.scores(k, p), table.counts(k, p)});
    }
  }
  j["entries"] = std::move(entries);
  return j;
}

FlowScoreTable table_from_json(const nlohmann::json& j) {
  FlowScoreTable table;
  table.steps = j.at("steps").get<int>();
  table.seed = j.at("seed").get<std::uint64_t>();
  table.target_class = j.at("target_class").get<int>();
  table.full_value = j.value("full_value", 0.0);
  table.empty_value = j.value("empty_value", 0.0);
  const Index flows = j.at("num_flows").get<Index>();
  const Index universe = j.at("num_layer_edges").get<Index>();
  table.scores = Matrix::Zero(flows, universe);
  table.counts =
      Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(flows, universe);
  table.edge_marginal_mean = Vector::Zero(universe);
  const auto& mean = j.at("edge_marginal_mean");
  for (Index e = 0; e < universe; ++e)
    table.edge_marginal_mean(e) = mean.at(static_cast<std::size_t>(e)).get<Real>();
  for (const auto& entry : j.at("entries")) {
    const Index k = entry.at(0).get<Index>();
    const Index p = entry.at(1).get<Index>();
    table.scores(k, p) = entry.at(2).get<Real>();
    table.counts(k, p) = entry.at(3).get<std::int32_t>();
  }
  return table;
}

}  // namespace flowx
