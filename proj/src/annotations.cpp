#include "dpf/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dpf/netpbm.hpp"

namespace dpf::io {

using nlohmann::json;
using supervision::ComparisonPair;
using supervision::PointLabel;
using supervision::Relation;

namespace {

[[noreturn]] void schema_error(const std::string& list, std::size_t index, const std::string& what) {
  throw ContractError("annotations: " + list + "[" + std::to_string(index) + "]: " + what);
}

int read_index(const json& rec, const char* key, const std::string& list, std::size_t i) {
  if (!rec.contains(key) || !rec[key].is_number_integer()) schema_error(list, i, std::string("'") + key + "' must be an integer");
  const auto v = rec[key].get<long long>();
  if (v < 0 || v > (1LL << 30)) schema_error(list, i, std::string("'") + key + "' out of range");
  return static_cast<int>(v);
}

void read_point(const json& rec, const char* key, std::size_t i, double& x, double& y) {
  if (!rec.contains(key) || !rec[key].is_array() || rec[key].size() != 2 || !rec[key][0].is_number() ||
      !rec[key][1].is_number()) {
    schema_error("comparisons", i, std::string("'") + key + "' must be [x, y]");
  }
  x = rec[key][0].get<double>();
  y = rec[key][1].get<double>();
  if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) {
    schema_error("comparisons", i, std::string("'") + key + "' coordinate outside [0, 1]");
  }
}

}  // namespace

Annotations parse_annotations(const json& doc) {
  require(doc.is_object(), "annotations: top level must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "points" && key != "comparisons") throw ContractError("annotations: unknown key '" + key + "'");
  }
  Annotations ann;
  if (doc.contains("points")) {
    require(doc["points"].is_array(), "annotations: 'points' must be an array");
    std::size_t i = 0;
    for (const auto& rec : doc["points"]) {
      if (!rec.is_object()) schema_error("points", i, "record must be an object");
      ann.points.push_back(PointLabel{read_index(rec, "row", "points", i), read_index(rec, "col", "points", i),
                                      read_index(rec, "label", "points", i)});
      ++i;
    }
  }
  if (doc.contains("comparisons")) {
    require(doc["comparisons"].is_array(), "annotations: 'comparisons' must be an array");
    std::size_t i = 0;
    for (const auto& rec : doc["comparisons"]) {
      if (!rec.is_object()) schema_error("comparisons", i, "record must be an object");
      ComparisonPair p;
      read_point(rec, "p1", i, p.x1, p.y1);
      read_point(rec, "p2", i, p.x2, p.y2);
      if (!rec.contains("darker") || !rec["darker"].is_string()) schema_error("comparisons", i, "'darker' must be a string");
      const auto d = rec["darker"].get<std::string>();
      if (d == "1") {
        p.relation = Relation::darker1;
      } else if (d == "2") {
        p.relation = Relation::darker2;
      } else if (d == "E") {
        p.relation = Relation::equal;
      } else {
        schema_error("comparisons", i, "unknown 'darker' label '" + d + "' (expected \"1\", \"2\" or \"E\")");
      }
      if (!rec.contains("weight") || !rec["weight"].is_number()) schema_error("comparisons", i, "'weight' must be a number");
      p.weight = rec["weight"].get<double>();
      if (!std::isfinite(p.weight) || p.weight < 0.0) schema_error("comparisons", i, "'weight' must be finite and >= 0");
      ann.comparisons.push_back(p);
      ++i;
    }
  }
  return ann;
}

json annotations_to_json(const Annotations& ann) {
  json doc = json::object();
  if (!ann.points.empty() || ann.comparisons.empty()) {
    doc["points"] = json::array();
    for (const auto& p : ann.points) doc["points"].push_back({{"row", p.row}, {"col", p.col}, {"label", p.label}});
  }
  if (!ann.comparisons.empty()) {
    doc["comparisons"] = json::array();
    for (const auto& c : ann.comparisons) {
      doc["comparisons"].push_back({{"p1", {c.x1, c.y1}},
                                    {"p2", {c.x2, c.y2}},
                                    {"darker", supervision::relation_name(c.relation)},
                                    {"weight", c.weight}});
    }
  }
  return doc;
}

Annotations load_annotations(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what(), e.byte);
  }
  try {
    return parse_annotations(doc);
  } catch (const ParseError&) {
    throw;
  } catch (const ContractError& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

void save_annotations(const std::filesystem::path& path, const Annotations& ann) {
  const std::string text = annotations_to_json(ann).dump(1) + "\n";
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetSplit split_every_fifth(const std::vector<std::int64_t>& ids) {
  require(!ids.empty(), "split_every_fifth: id list is empty");
  require(std::is_sorted(ids.begin(), ids.end()), "split_every_fifth: ids must be sorted ascending");
  DatasetSplit split;
  for (std::size_t i = 0; i < ids.size(); ++i) (i % 5 == 0 ? split.test : split.train).push_back(ids[i]);
  return split;
}

}  // namespace dpf::io
