#pragma once

#include "flowx/graph.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace flowx {

enum class Task { NodeClassification, GraphClassification };

/// A named collection of graphs plus the recorded 80/10/10 split.
/// For node classification the dataset holds one graph and the split
/// indices refer to nodes; otherwise they refer to graphs.
struct Dataset {
  std::string name;
  Task task = Task::GraphClassification;
  int num_classes = 2;
  std::uint64_t seed = 0;
  nlohmann::json params;
  std::vector<Graph> graphs;
  std::vector<Index> train_idx, val_idx, test_idx;

  Index sample_count() const {
    return task == Task::NodeClassification ? graphs.front().n
                                            : static_cast<Index>(graphs.size());
  }
};

/// Shuffled split over samples; fractions 0.8/0.1/0.1 by default.
void assign_splits(Dataset& data, std::uint64_t seed, Real train_frac = 0.8,
                   Real val_frac = 0.1);

/// Directory layout: manifest.json plus graph_00000.json per sample.
void save_dataset(const Dataset& data, const std::string& dir, bool force = false);
Dataset load_dataset(const std::string& dir);

}  // namespace flowx
