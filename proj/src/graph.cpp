#include "bolero/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "bolero/error.hpp"

namespace bolero {

namespace {

struct ColumnRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Train-fitted min/max per continuous column (NaN cells ignored).
std::vector<ColumnRange> train_ranges(const TabularDataset& dataset) {
  std::vector<ColumnRange> ranges(dataset.columns().size());
  const auto train = dataset.rows_in(Split::Train);
  for (std::size_t c = 0; c < dataset.columns().size(); ++c) {
    const auto& col = dataset.columns()[c];
    if (col.kind != ColumnKind::Continuous) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t r : train) {
      const double v = col.values[r];
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo > hi) lo = hi = 0.0;  // no observed train value; every weight becomes 0.5
    ranges[c] = {lo, hi};
  }
  return ranges;
}

void require_preprocessed(const TabularDataset& dataset) {
  for (const auto& col : dataset.columns()) {
    if (col.kind == ColumnKind::DateLike || (col.kind == ColumnKind::Categorical && col.codes.size() != dataset.num_rows()))
      throw Error(ErrorCode::SchemaMismatch, fmt::format("column '{}' is not preprocessed", col.name));
  }
}

// Anchor lookup for categorical cells: column -> code -> anchor index.
std::vector<std::map<std::uint32_t, std::uint32_t>> categorical_lookup(const TabularDataset& dataset,
                                                                        const std::vector<AnchorId>& anchors) {
  std::vector<std::map<std::uint32_t, std::uint32_t>> lookup(dataset.columns().size());
  for (const auto& a : anchors)
    if (a.kind == AnchorKind::CategoricalValue) lookup.at(a.column)[a.code] = a.index;
  return lookup;
}

std::vector<std::uint32_t> continuous_lookup(const TabularDataset& dataset, const std::vector<AnchorId>& anchors) {
  std::vector<std::uint32_t> lookup(dataset.columns().size(), std::numeric_limits<std::uint32_t>::max());
  for (const auto& a : anchors)
    if (a.kind == AnchorKind::ContinuousFeature) lookup.at(a.column) = a.index;
  return lookup;
}

std::string format_weight(double w) { return fmt::format("{:.9g}", w); }

}  // namespace

double minmax_weight(double value, double lo, double hi) {
  if (std::isnan(value)) return value;
  if (!(hi > lo)) return 0.5;
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

std::size_t CooccurrenceStats::joint(std::uint32_t a, std::uint32_t b) const {
  if (a == b) return marginal.at(a);
  const auto it = joint_counts.find(pair_key(a, b));
  return it == joint_counts.end() ? 0 : it->second;
}

double CooccurrenceStats::p(std::uint32_t a) const {
  return static_cast<double>(marginal.at(a)) / static_cast<double>(total_rows);
}

double CooccurrenceStats::p(std::uint32_t a, std::uint32_t b) const {
  return static_cast<double>(joint(a, b)) / static_cast<double>(total_rows);
}

std::vector<AnchorId> build_anchors(const TabularDataset& dataset) {
  require_preprocessed(dataset);
  std::vector<AnchorId> anchors;
  for (std::size_t c = 0; c < dataset.columns().size(); ++c) {
    const auto& col = dataset.columns()[c];
    if (col.kind == ColumnKind::Categorical) {
      const std::set<std::uint32_t> codes(col.codes.begin(), col.codes.end());
      for (std::uint32_t code : codes)
        anchors.push_back({AnchorKind::CategoricalValue, static_cast<std::uint32_t>(c), col.name, code,
                           static_cast<std::uint32_t>(anchors.size())});
    } else if (col.kind == ColumnKind::Continuous) {
      anchors.push_back({AnchorKind::ContinuousFeature, static_cast<std::uint32_t>(c), col.name, 0,
                         static_cast<std::uint32_t>(anchors.size())});
    }
  }
  return anchors;
}

std::vector<InstanceEdge> build_instance_edges(const TabularDataset& dataset, const std::vector<AnchorId>& anchors) {
  require_preprocessed(dataset);
  const auto ranges = train_ranges(dataset);
  const auto cat = categorical_lookup(dataset, anchors);
  const auto cont = continuous_lookup(dataset, anchors);
  const auto& columns = dataset.columns();

  std::vector<InstanceEdge> edges;
  for (std::size_t r = 0; r < dataset.num_rows(); ++r) {
    const auto row = static_cast<std::uint32_t>(r);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& col = columns[c];
      if (col.kind == ColumnKind::Categorical) {
        edges.push_back({row, cat[c].at(col.codes[r]), 1.0});
      } else if (col.kind == ColumnKind::Continuous) {
        const double w = minmax_weight(col.values[r], ranges[c].lo, ranges[c].hi);
        if (!std::isnan(w)) edges.push_back({row, cont[c], w});
      }
    }
  }
  return edges;
}

CooccurrenceStats count_cooccurrence(const TabularDataset& dataset, const std::vector<AnchorId>& anchors,
                                     double occurrence_threshold) {
  const auto edges = build_instance_edges(dataset, anchors);
  CooccurrenceStats stats;
  stats.total_rows = dataset.num_rows();
  stats.marginal.assign(anchors.size(), 0);

  // Edges are grouped by instance, anchors ascending within each row.
  std::vector<std::uint32_t> present;
  auto flush = [&] {
    for (std::size_t i = 0; i < present.size(); ++i) {
      ++stats.marginal[present[i]];
      for (std::size_t j = i + 1; j < present.size(); ++j)
        ++stats.joint_counts[CooccurrenceStats::pair_key(present[i], present[j])];
    }
    present.clear();
  };
  std::uint32_t current = 0;
  for (const auto& e : edges) {
    if (e.instance != current) {
      flush();
      current = e.instance;
    }
    const bool occurs = anchors[e.anchor].kind == AnchorKind::CategoricalValue ? e.weight > 0.0
                                                                                : e.weight > occurrence_threshold;
    if (occurs) present.push_back(e.anchor);
  }
  flush();
  return stats;
}

double ppmi(const CooccurrenceStats& stats, std::uint32_t a, std::uint32_t b) {
  const std::size_t ca = stats.marginal.at(a);
  const std::size_t cb = stats.marginal.at(b);
  if (ca == 0 || cb == 0)
    throw Error(ErrorCode::ZeroMarginal, fmt::format("anchor {} or {} never occurs", a, b));
  const std::size_t joint = stats.joint(a, b);
  if (joint == 0) return 0.0;
  // p(a,b) / (p(a) p(b)) = joint * M / (ca * cb)
  const double ratio = (static_cast<double>(joint) * static_cast<double>(stats.total_rows)) /
                       (static_cast<double>(ca) * static_cast<double>(cb));
  return std::max(0.0, std::log(ratio));
}

BipartiteGraph build_graph(const TabularDataset& dataset, const GraphOptions& options) {
  BipartiteGraph graph;
  graph.num_instances = dataset.num_rows();
  graph.anchors = build_anchors(dataset);
  graph.ia_edges = build_instance_edges(dataset, graph.anchors);
  const auto stats = count_cooccurrence(dataset, graph.anchors, options.occurrence_threshold);

  std::vector<std::pair<std::uint64_t, std::size_t>> pairs(stats.joint_counts.begin(), stats.joint_counts.end());
  std::sort(pairs.begin(), pairs.end());

  const std::size_t n_anchors = graph.anchors.size();
  std::vector<std::vector<std::pair<double, std::uint32_t>>> neighbours(n_anchors);
  std::map<std::uint64_t, double> weight_of;
  for (const auto& [key, count] : pairs) {
    const auto a = static_cast<std::uint32_t>(key >> 32);
    const auto b = static_cast<std::uint32_t>(key & 0xFFFFFFFFu);
    const double w = ppmi(stats, a, b);
    if (w <= 0.0) continue;
    neighbours[a].push_back({w, b});
    neighbours[b].push_back({w, a});
    weight_of[key] = w;
  }

  std::set<std::uint64_t> kept;
  for (std::uint32_t a = 0; a < n_anchors; ++a) {
    auto& list = neighbours[a];
    std::sort(list.begin(), list.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    const std::size_t k = std::min(options.top_k, list.size());
    for (std::size_t i = 0; i < k; ++i) kept.insert(CooccurrenceStats::pair_key(a, list[i].second));
  }
  for (std::uint64_t key : kept)
    graph.aa_edges.push_back({static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xFFFFFFFFu),
                              weight_of.at(key)});
  return graph;
}

void BipartiteGraph::validate() const {
  for (std::size_t i = 0; i < anchors.size(); ++i)
    if (anchors[i].index != i) throw Error(ErrorCode::ShapeMismatch, fmt::format("anchor {} has index {}", i, anchors[i].index));
  for (const auto& e : ia_edges) {
    if (e.instance >= num_instances || e.anchor >= anchors.size())
      throw Error(ErrorCode::ShapeMismatch, fmt::format("ia edge ({}, {}) out of range", e.instance, e.anchor));
    if (!(e.weight >= 0.0 && e.weight <= 1.0))
      throw Error(ErrorCode::ShapeMismatch, fmt::format("ia edge weight {} outside [0,1]", e.weight));
  }
  for (const auto& e : aa_edges) {
    if (e.a >= e.b || e.b >= anchors.size())
      throw Error(ErrorCode::ShapeMismatch, fmt::format("aa edge ({}, {}) is not an ordered in-range pair", e.a, e.b));
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
      throw Error(ErrorCode::ShapeMismatch, fmt::format("aa edge weight {} is negative or non-finite", e.weight));
  }
}

std::string BipartiteGraph::to_json(std::string_view config_hash) const {
  std::string out = "{\n";
  if (!config_hash.empty()) out += fmt::format("  \"config_hash\": \"{}\",\n", config_hash);
  out += fmt::format("  \"num_instances\": {},\n  \"anchors\": [", num_instances);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    out += i == 0 ? "\n    " : ",\n    ";
    const nlohmann::json name = a.column_name;
    if (a.kind == AnchorKind::CategoricalValue)
      out += fmt::format(R"({{"id": {}, "kind": "categorical", "column": {}, "column_index": {}, "code": {}}})",
                         a.index, name.dump(), a.column, a.code);
    else
      out += fmt::format(R"({{"id": {}, "kind": "continuous", "column": {}, "column_index": {}}})", a.index,
                         name.dump(), a.column);
  }
  out += anchors.empty() ? "],\n" : "\n  ],\n";
  out += "  \"ia_edges\": [";
  for (std::size_t i = 0; i < ia_edges.size(); ++i) {
    const auto& e = ia_edges[i];
    out += i == 0 ? "\n    " : ",\n    ";
    out += fmt::format("[{}, {}, {}]", e.instance, e.anchor, format_weight(e.weight));
  }
  out += ia_edges.empty() ? "],\n" : "\n  ],\n";
  out += "  \"aa_edges\": [";
  for (std::size_t i = 0; i < aa_edges.size(); ++i) {
    const auto& e = aa_edges[i];
    out += i == 0 ? "\n    " : ",\n    ";
    out += fmt::format("[{}, {}, {}]", e.a, e.b, format_weight(e.weight));
  }
  out += aa_edges.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

BipartiteGraph BipartiteGraph::from_json(std::string_view text) {
  BipartiteGraph g;
  try {
    const auto j = nlohmann::json::parse(text);
    g.num_instances = j.at("num_instances").get<std::size_t>();
    for (const auto& a : j.at("anchors")) {
      AnchorId id;
      id.index = a.at("id").get<std::uint32_t>();
      id.column_name = a.at("column").get<std::string>();
      id.column = a.at("column_index").get<std::uint32_t>();
      const auto kind = a.at("kind").get<std::string>();
      if (kind == "categorical") {
        id.kind = AnchorKind::CategoricalValue;
        id.code = a.at("code").get<std::uint32_t>();
      } else if (kind == "continuous") {
        id.kind = AnchorKind::ContinuousFeature;
      } else {
        throw Error(ErrorCode::FormatError, fmt::format("unknown anchor kind '{}'", kind));
      }
      g.anchors.push_back(std::move(id));
    }
    for (const auto& e : j.at("ia_edges"))
      g.ia_edges.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>(), e.at(2).get<double>()});
    for (const auto& e : j.at("aa_edges"))
      g.aa_edges.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>(), e.at(2).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, fmt::format("malformed graph JSON: {}", e.what()));
  }
  g.validate();
  return g;
}

}  // namespace bolero
