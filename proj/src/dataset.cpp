#include "flowx/dataset.hpp"

#include "flowx/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace flowx {

namespace fs = std::filesystem;

void assign_splits(Dataset& data, std::uint64_t seed, Real train_frac, Real val_frac) {
  const Index n = data.sample_count();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  SplitMix64 rng = SplitMix64::substream(seed, 0x5137);
  rng.shuffle(order);
  const Index n_train = static_cast<Index>(train_frac * static_cast<Real>(n));
  const Index n_val = static_cast<Index>(val_frac * static_cast<Real>(n));
  data.train_idx.assign(order.begin(), order.begin() + n_train);
  data.val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  data.test_idx.assign(order.begin() + n_train + n_val, order.end());
}

namespace {

std::string graph_file_name(Index i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "graph_%05lld.json", static_cast<long long>(i));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string task_name(Task t) {
  return t == Task::NodeClassification ? "node_classification" : "graph_classification";
}

}  // namespace

void save_dataset(const Dataset& data, const std::string& dir, bool force) {
  const fs::path root(dir);
  if (fs::exists(root) && !fs::is_empty(root) && !force)
    throw DataError("output directory " + dir + " exists and is not empty (use force)");
  fs::create_directories(root);

  nlohmann::json manifest;
  manifest["name"] = data.name;
  manifest["task"] = task_name(data.task);
  manifest["num_classes"] = data.num_classes;
  manifest["seed"] = data.seed;
  manifest["params"] = data.params;
  manifest["num_graphs"] = data.graphs.size();
  manifest["splits"] = {{"train", data.train_idx}, {"val", data.val_idx}, {"test", data.test_idx}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");

  for (std::size_t i = 0; i < data.graphs.size(); ++i) {
    write_text(root / graph_file_name(static_cast<Index>(i)),
               graph_to_json(data.graphs[i]).dump() + "\n");
  }
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) throw DataError("missing manifest.json in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(in);

  Dataset data;
  data.name = manifest.at("name").get<std::string>();
  data.task = manifest.at("task").get<std::string>() == "node_classification"
                  ? Task::NodeClassification
                  : Task::GraphClassification;
  data.num_classes = manifest.at("num_classes").get<int>();
  data.seed = manifest.at("seed").get<std::uint64_t>();
  data.params = manifest.value("params", nlohmann::json::object());
  const std::size_t count = manifest.at("num_graphs").get<std::size_t>();
  data.graphs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::ifstream gin(root / graph_file_name(static_cast<Index>(i)));
    if (!gin) throw DataError("missing graph file " + graph_file_name(static_cast<Index>(i)));
    data.graphs.push_back(graph_from_json(nlohmann::json::parse(gin)));
  }
  data.train_idx = manifest.at("splits").at("train").get<std::vector<Index>>();
  data.val_idx = manifest.at("splits").at("val").get<std::vector<Index>>();
  data.test_idx = manifest.at("splits").at("test").get<std::vector<Index>>();
  return data;
}

}  // namespace flowx
