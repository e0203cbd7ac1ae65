#include "flowx/eval.hpp"
#include "flowx/gnn.hpp"
#include "flowx/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string resolve_data_path(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* root = std::getenv("FLOWX_DATA_ROOT")) {
    const fs::path candidate = fs::path(root) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw flowx::DataError("cannot read " + path);
  return json::parse(in);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw flowx::DataError("cannot write " + path);
  out << text;
}

flowx::GnnModel load_checkpoint(const std::string& path) {
  return flowx::model_from_json(read_json_file(resolve_data_path(path)));
}

struct GenArgs {
  std::string dataset;
  std::string out_dir;
  int graphs = 2000;
  int nodes = 20;
  int base_nodes = 300;
  int motifs = 80;
  std::uint64_t seed = 0;
  bool force = false;
};

int run_gen(const GenArgs& a) {
  flowx::Dataset data;
  if (a.dataset == "ba-lrp") {
    data = flowx::gen_ba_lrp(a.graphs, a.nodes, a.seed);
  } else if (a.dataset == "ba-infe") {
    data = flowx::gen_ba_infe(a.graphs, a.seed);
  } else if (a.dataset == "ba-shapes") {
    data = flowx::gen_ba_shapes(a.base_nodes, a.motifs, a.seed);
  } else {
    std::cerr << "unknown dataset name: " << a.dataset << "\n";
    return kExitUsage;
  }
  std::string out = a.out_dir;
  if (out.empty()) {
    if (const char* root = std::getenv("FLOWX_DATA_ROOT")) {
      out = (fs::path(root) / a.dataset).string();
    } else {
      throw flowx::DataError("no output directory given and FLOWX_DATA_ROOT is unset");
    }
  }
  flowx::save_dataset(data, out, a.force);
  std::cout << "wrote " << data.graphs.size() << " graph(s) to " << out << "\n";
  return 0;
}

struct TrainArgs {
  std::string dataset_dir;
  std::string checkpoint = "model.json";
  std::string metrics_path;
  std::string layers = "gcn";
  int T = 0;  // 0: 2 for node tasks, 3 for graph tasks
  int hidden = 32;
  int epochs = 100;
  double lr = 1e-3;
  double lr_decay = 0.5;
  int decay_epoch = 500;
  int batch = 32;
  std::string optimizer = "sgd";
  double dropout = 0.0;
  std::uint64_t seed = 0;
  bool verbose = false;
};

int run_train(const TrainArgs& a) {
  const flowx::Dataset data = flowx::load_dataset(resolve_data_path(a.dataset_dir));
  const auto kind = a.layers == "gin" ? flowx::LayerKind::Gin : flowx::LayerKind::Gcn;
  const bool node_task = data.task == flowx::Task::NodeClassification;
  const int T = a.T > 0 ? a.T : (node_task ? 2 : 3);
  const auto readout = node_task ? flowx::ReadoutKind::NodeLevel : flowx::ReadoutKind::MeanPool;
  flowx::GnnModel model =
      flowx::init_model(kind, readout, T, data.graphs.front().feature_dim(), a.hidden,
                        data.num_classes, a.dropout, a.seed);
  flowx::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.lr = a.lr;
  cfg.lr_decay = a.lr_decay;
  cfg.decay_epoch = a.decay_epoch;
  cfg.batch_size = a.batch;
  cfg.optimizer = a.optimizer == "adam" ? flowx::Optimizer::Adam : flowx::Optimizer::Sgd;
  cfg.seed = a.seed;
  cfg.verbose = a.verbose;
  const flowx::TrainReport report = flowx::train(model, data, cfg);

  write_text_file(a.checkpoint, flowx::model_to_json(model).dump(2) + "\n");
  json metrics = {{"dataset", data.name},
                  {"layer_kind", a.layers},
                  {"epochs", a.epochs},
                  {"best_epoch", report.best_epoch},
                  {"train_accuracy", report.train_accuracy},
                  {"val_accuracy", report.val_accuracy},
                  {"test_accuracy", report.test_accuracy}};
  if (!a.metrics_path.empty()) write_text_file(a.metrics_path, metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

struct ExplainArgs {
  std::string checkpoint;
  std::string graph_path;
  std::string method = "flowx";
  std::string out_path = "explanation.json";
  std::string table_in;
  std::string table_out;
  std::string trace_path;
  int mc_steps = 30;
  int iterations = 500;
  double lr = 0.3;
  double r = 8.0;
  std::string init = "uniform-low";
  double init_range = 0.1;
  std::uint64_t seed = 0;
  int target_node = -1;
  double sparsity = 0.9;
  int jobs = 1;
  std::uint64_t cap = 2'000'000;
  bool logit_game = false;
};

json explanation_to_json(const flowx::ExplanationResult& res, const flowx::FlowIndex* index,
                         const flowx::Graph& g, const ExplainArgs& a) {
  json j;
  j["method"] = res.method;
  j["seed"] = res.seed;
  j["target_class"] = res.target_class;
  j["config"] = {{"mc_steps", a.mc_steps}, {"iterations", a.iterations},  {"lr", a.lr},
                 {"r", a.r},               {"init", a.init},              {"cap", a.cap},
                 {"target_node", a.target_node}};

  auto flows = json::array();
  if (index && res.flow_scores.size() == index->flow_count()) {
    std::vector<flowx::Index> order(static_cast<std::size_t>(index->flow_count()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<flowx::Index>(i);
    std::stable_sort(order.begin(), order.end(), [&](flowx::Index x, flowx::Index y) {
      return res.flow_scores(x) > res.flow_scores(y);
    });
    for (flowx::Index k : order) {
      flows.push_back({{"nodes", index->flows[static_cast<std::size_t>(k)].nodes},
                       {"score", res.flow_scores(k)}});
    }
  }
  j["flows"] = std::move(flows);

  auto layer_edges = json::array();
  if (index && res.layer_edge_scores.size() == index->universe_size()) {
    for (flowx::Index e = 0; e < index->universe_size(); ++e) {
      const auto id = flowx::layer_edge_at(g, index->T, e);
      layer_edges.push_back(
          {{"layer", id.layer}, {"src", id.src}, {"dst", id.dst}, {"score", res.layer_edge_scores(e)}});
    }
  }
  j["layer_edges"] = std::move(layer_edges);

  auto input_edges = json::array();
  for (flowx::Index e = 0; e < g.edge_count(); ++e) {
    const auto& [src, dst] = g.edges[static_cast<std::size_t>(e)];
    input_edges.push_back({{"src", src}, {"dst", dst}, {"score", res.input_edge_scores(e)}});
  }
  j["input_edges"] = std::move(input_edges);

  const flowx::Selection sel = flowx::select_topk(res.input_edge_scores, a.sparsity);
  auto selected = json::array();
  for (flowx::Index e = 0; e < g.edge_count(); ++e) {
    if (sel[static_cast<std::size_t>(e)]) {
      const auto& [src, dst] = g.edges[static_cast<std::size_t>(e)];
      selected.push_back({src, dst});
    }
  }
  j["selection"] = {{"sparsity", a.sparsity}, {"selected", std::move(selected)}};
  return j;
}

int run_explain(const ExplainArgs& a) {
  const flowx::GnnModel model = load_checkpoint(a.checkpoint);
  const flowx::Graph g = flowx::graph_from_json(read_json_file(resolve_data_path(a.graph_path)));

  flowx::ExplainConfig cfg;
  cfg.method = flowx::method_from_name(a.method);
  cfg.cap = a.cap;
  cfg.sampler.steps = a.mc_steps;
  cfg.sampler.seed = a.seed;
  cfg.sampler.jobs = a.jobs;
  cfg.sampler.value = a.logit_game ? flowx::GameValue::Logit : flowx::GameValue::Probability;
  cfg.refiner.learning_rate = a.lr;
  cfg.refiner.iterations = a.iterations;
  cfg.refiner.r = a.r;
  cfg.refiner.init =
      a.init == "half-noise" ? flowx::WeightInit::HalfNoise : flowx::WeightInit::UniformLow;
  cfg.refiner.init_range = a.init_range;
  cfg.refiner.seed = a.seed;
  cfg.refiner.trace_path = a.trace_path;

  const auto start = std::chrono::steady_clock::now();
  flowx::ExplanationResult res;
  const flowx::FlowIndex* index_ptr = nullptr;
  flowx::FlowIndex index;
  if (cfg.method == flowx::Method::Random) {
    res = flowx::explain(model, g, cfg, a.target_node);
  } else {
    index = flowx::enumerate_flows(g, model.T, cfg.cap);
    index_ptr = &index;
    if (cfg.method == flowx::Method::FlowXDagger) {
      res = flowx::explain(model, g, cfg, a.target_node);
    } else {
      flowx::FlowScoreTable table;
      if (!a.table_in.empty()) {
        table = flowx::table_from_json(read_json_file(a.table_in));
        if (table.scores.rows() != index.flow_count() ||
            table.scores.cols() != index.universe_size())
          throw flowx::DataError("table shape does not match this (graph, model)");
      } else {
        table = flowx::sample_marginal_contributions(model, g, index, cfg.sampler);
      }
      if (!a.table_out.empty())
        write_text_file(a.table_out, flowx::table_to_json(table).dump() + "\n");
      res = flowx::explain_with_table(model, g, index, table, cfg, a.target_node);
    }
  }
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();

  write_text_file(a.out_path, explanation_to_json(res, index_ptr, g, a).dump(2) + "\n");
  std::cerr << "explained " << a.graph_path << " with " << a.method << " in " << elapsed
            << " ms\n";
  return 0;
}

struct SweepArgs {
  std::string checkpoint;
  std::string dataset_dir;
  std::string methods = "flowx,random";
  std::string out_csv = "sweep.csv";
  std::string summary_path;
  std::string levels_arg;
  int samples = 100;
  int mc_steps = 30;
  int iterations = 500;
  double lr = 0.3;
  double r = 8.0;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool with_accuracy = false;
};

int run_sweep(const SweepArgs& a) {
  const flowx::GnnModel model = load_checkpoint(a.checkpoint);
  const flowx::Dataset data = flowx::load_dataset(resolve_data_path(a.dataset_dir));

  std::vector<flowx::Real> levels;
  if (a.levels_arg.empty()) {
    levels = flowx::default_sparsity_levels();
  } else {
    std::stringstream ss(a.levels_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) levels.push_back(std::stod(tok));
  }

  std::vector<std::string> methods;
  {
    std::stringstream ss(a.methods);
    std::string tok;
    while (std::getline(ss, tok, ',')) methods.push_back(tok);
  }

  const auto samples = flowx::draw_sweep_samples(data, a.samples, a.seed);
  std::ostringstream csv;
  csv << "method,dataset,sparsity,fidelity,n_samples,seed\n";
  json summary = {{"dataset", data.name},
                  {"seed", a.seed},
                  {"samples", static_cast<int>(samples.size())},
                  {"methods", json::object()}};
  for (const auto& name : methods) {
    flowx::ExplainConfig cfg;
    cfg.method = flowx::method_from_name(name);
    cfg.sampler.steps = a.mc_steps;
    cfg.sampler.seed = a.seed;
    cfg.refiner.iterations = a.iterations;
    cfg.refiner.learning_rate = a.lr;
    cfg.refiner.r = a.r;
    cfg.refiner.seed = a.seed;
    const flowx::SweepResult res =
        flowx::sparsity_sweep(model, data, samples, cfg, levels, a.with_accuracy, a.jobs);
    for (const auto& lvl : res.levels) {
      csv << name << ',' << data.name << ',' << lvl.sparsity_level << ',' << lvl.mean_fidelity
          << ',' << lvl.n_samples << ',' << a.seed << '\n';
    }
    json entry = {{"mean_fidelity", res.mean_fidelity},
                  {"n_samples", res.n_samples},
                  {"n_failed", res.n_failed}};
    if (res.mean_accuracy) entry["accuracy_at_0.9"] = *res.mean_accuracy;
    summary["methods"][name] = std::move(entry);
    std::cerr << name << ": mean fidelity " << res.mean_fidelity;
    if (res.mean_accuracy) std::cerr << ", accuracy@0.9 " << *res.mean_accuracy;
    std::cerr << " (" << res.n_failed << " failed)\n";
  }
  write_text_file(a.out_csv, csv.str());
  if (!a.summary_path.empty()) write_text_file(a.summary_path, summary.dump(2) + "\n");
  return 0;
}

struct OracleArgs {
  std::string checkpoint;
  std::string graph_path;
  int target_class = -1;
  int target_node = -1;
};

int run_oracle(const OracleArgs& a) {
  const flowx::GnnModel model = load_checkpoint(a.checkpoint);
  const flowx::Graph g = flowx::graph_from_json(read_json_file(resolve_data_path(a.graph_path)));
  const flowx::Index universe = g.edge_count() * model.T;
  if (universe > 20) {
    std::cerr << "refusing: |A| = " << universe
              << " exceeds the exact-enumeration bound of 20 layer edges\n";
    return kExitData;
  }
  const flowx::ShapleyReport exact =
      flowx::shapley_exact(model, g, a.target_class, a.target_node);
  std::cout << "exact Shapley values (target class " << exact.target_class << "):\n";
  for (flowx::Index e = 0; e < universe; ++e) {
    const auto id = flowx::layer_edge_at(g, model.T, e);
    std::cout << "  layer " << id.layer << " edge (" << id.src << "," << id.dst
              << "): " << exact.values(e) << "\n";
  }

  std::uint64_t fact = 1;
  bool exhaustive_ok = true;
  for (flowx::Index i = 2; i <= universe; ++i) {
    fact *= static_cast<std::uint64_t>(i);
    if (fact > 10'080) {
      exhaustive_ok = false;
      break;
    }
  }
  if (!exhaustive_ok) {
    std::cout << "|A|! too large for exhaustive permutation comparison; exact values only\n";
    return 0;
  }

  const flowx::FlowIndex index = flowx::enumerate_flows(g, model.T);
  flowx::SamplerConfig cfg;
  cfg.exhaustive = true;
  cfg.target_class = exact.target_class;
  cfg.target_node = a.target_node;
  const flowx::FlowScoreTable table = flowx::sample_marginal_contributions(model, g, index, cfg);
  const double max_diff = (table.edge_marginal_mean - exact.values).cwiseAbs().maxCoeff();
  std::cout << "max |exhaustive - exact| = " << max_diff << "\n";
  if (max_diff < 1e-9) {
    std::cout << "PASS (below 1e-9)\n";
    return 0;
  }
  std::cout << "FAIL (at or above 1e-9)\n";
  return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FlowX: message-flow explanations for small GNNs"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags take precedence");

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic dataset");
  cmd_gen->add_option("dataset", gen.dataset, "ba-shapes | ba-lrp | ba-infe")->required();
  cmd_gen->add_option("-o,--out", gen.out_dir, "output directory");
  cmd_gen->add_option("--graphs", gen.graphs, "graph count (graph tasks)");
  cmd_gen->add_option("--nodes", gen.nodes, "nodes per graph (ba-lrp)");
  cmd_gen->add_option("--base-nodes", gen.base_nodes, "base graph size (ba-shapes)");
  cmd_gen->add_option("--motifs", gen.motifs, "motif count (ba-shapes)");
  cmd_gen->add_option("--seed", gen.seed, "rng seed");
  cmd_gen->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "train a GCN/GIN classifier");
  cmd_train->add_option("dataset", train.dataset_dir, "dataset directory")->required();
  cmd_train->add_option("-o,--out", train.checkpoint, "checkpoint path");
  cmd_train->add_option("--metrics", train.metrics_path, "metrics JSON path");
  cmd_train->add_option("--layers", train.layers, "gcn | gin");
  cmd_train->add_option("--T", train.T, "message-passing layers (default 2 node / 3 graph)");
  cmd_train->add_option("--hidden", train.hidden, "hidden width");
  cmd_train->add_option("--epochs", train.epochs, "training epochs");
  cmd_train->add_option("--lr", train.lr, "learning rate");
  cmd_train->add_option("--lr-decay", train.lr_decay, "decay factor");
  cmd_train->add_option("--decay-epoch", train.decay_epoch, "epoch of the single decay");
  cmd_train->add_option("--batch", train.batch, "minibatch size");
  cmd_train->add_option("--optimizer", train.optimizer, "sgd | adam");
  cmd_train->add_option("--dropout", train.dropout, "classifier dropout rate");
  cmd_train->add_option("--seed", train.seed, "rng seed");
  cmd_train->add_flag("--verbose", train.verbose, "per-epoch log");

  ExplainArgs explain;
  auto* cmd_explain = app.add_subcommand("explain", "explain one graph prediction");
  cmd_explain->add_option("--checkpoint", explain.checkpoint, "model checkpoint")->required();
  cmd_explain->add_option("--graph", explain.graph_path, "graph json")->required();
  cmd_explain->add_option("--method", explain.method, "flowx | flowx-star | flowx-dagger | random");
  cmd_explain->add_option("-o,--out", explain.out_path, "explanation json path");
  cmd_explain->add_option("--table", explain.table_in, "reuse a sampled score table");
  cmd_explain->add_option("--table-out", explain.table_out, "dump the sampled score table");
  cmd_explain->add_option("--trace", explain.trace_path, "refinement trace csv");
  cmd_explain->add_option("--mc-steps", explain.mc_steps, "MC sampling steps");
  cmd_explain->add_option("--iterations", explain.iterations, "refinement iterations");
  cmd_explain->add_option("--lr", explain.lr, "refinement learning rate");
  cmd_explain->add_option("--r", explain.r, "redistribution exponent");
  cmd_explain->add_option("--init", explain.init, "uniform-low | half-noise");
  cmd_explain->add_option("--init-range", explain.init_range, "init range / noise scale");
  cmd_explain->add_option("--seed", explain.seed, "rng seed");
  cmd_explain->add_option("--target-node", explain.target_node, "node id (node tasks)");
  cmd_explain->add_option("--sparsity", explain.sparsity, "selection sparsity in the output");
  cmd_explain->add_option("--jobs", explain.jobs, "sampler worker threads");
  cmd_explain->add_option("--cap", explain.cap, "flow enumeration cap");
  cmd_explain->add_flag("--logit-game", explain.logit_game, "use logits as the game value");

  SweepArgs sweep;
  auto* cmd_sweep = app.add_subcommand("sweep", "fidelity/sparsity sweep over a dataset");
  cmd_sweep->add_option("--checkpoint", sweep.checkpoint, "model checkpoint")->required();
  cmd_sweep->add_option("--dataset", sweep.dataset_dir, "dataset directory")->required();
  cmd_sweep->add_option("--methods", sweep.methods, "comma-separated method list");
  cmd_sweep->add_option("-o,--out", sweep.out_csv, "csv output path");
  cmd_sweep->add_option("--summary", sweep.summary_path, "summary json path");
  cmd_sweep->add_option("--levels", sweep.levels_arg, "comma-separated sparsity levels");
  cmd_sweep->add_option("--samples", sweep.samples, "sample count");
  cmd_sweep->add_option("--mc-steps", sweep.mc_steps, "MC sampling steps");
  cmd_sweep->add_option("--iterations", sweep.iterations, "refinement iterations");
  cmd_sweep->add_option("--lr", sweep.lr, "refinement learning rate");
  cmd_sweep->add_option("--r", sweep.r, "redistribution exponent");
  cmd_sweep->add_option("--seed", sweep.seed, "rng seed");
  cmd_sweep->add_option("--jobs", sweep.jobs, "worker threads");
  cmd_sweep->add_flag("--with-accuracy", sweep.with_accuracy, "report accuracy at sparsity 0.9");

  OracleArgs oracle;
  auto* cmd_oracle = app.add_subcommand("oracle", "exhaustive-vs-exact Shapley check");
  cmd_oracle->add_option("--checkpoint", oracle.checkpoint, "model checkpoint")->required();
  cmd_oracle->add_option("--graph", oracle.graph_path, "tiny graph json")->required();
  cmd_oracle->add_option("--target-class", oracle.target_class, "game target class");
  cmd_oracle->add_option("--target-node", oracle.target_node, "node id (node tasks)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (*cmd_gen) return run_gen(gen);
    if (*cmd_train) return run_train(train);
    if (*cmd_explain) return run_explain(explain);
    if (*cmd_sweep) return run_sweep(sweep);
    if (*cmd_oracle) return run_oracle(oracle);
  } catch (const flowx::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const flowx::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
