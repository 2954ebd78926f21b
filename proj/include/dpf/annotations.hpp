#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpf/supervision.hpp"

namespace dpf::io {

/// Parsing files carry "points", intrinsic files carry "comparisons"; either may be empty.
struct Annotations {
  std::vector<supervision::PointLabel> points;
  std::vector<supervision::ComparisonPair> comparisons;
};

Annotations parse_annotations(const nlohmann::json& doc);
nlohmann::json annotations_to_json(const Annotations& ann);

Annotations load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const Annotations& ann);

/// Ordered, disjoint train/test id lists.
struct DatasetSplit {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> test;
};

/// Test takes positions 0, 5, 10, ... of the ascending id list; train the rest.
DatasetSplit split_every_fifth(const std::vector<std::int64_t>& ids);

}  // namespace dpf::io
