#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bolero/dataset.hpp"

namespace bolero {

enum class AnchorKind { CategoricalValue, ContinuousFeature };

struct AnchorId {
  AnchorKind kind = AnchorKind::ContinuousFeature;
  std::uint32_t column = 0;  // index into dataset.columns()
  std::string column_name;
  std::uint32_t code = 0;    // categorical code; unused for continuous anchors
  std::uint32_t index = 0;   // dense id in [0, |A|)

  bool operator==(const AnchorId&) const = default;
};

struct InstanceEdge {
  std::uint32_t instance = 0;
  std::uint32_t anchor = 0;
  double weight = 0.0;

  bool operator==(const InstanceEdge&) const = default;
};

// Stored once per unordered pair with a < b.
struct AnchorEdge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double weight = 0.0;

  bool operator==(const AnchorEdge&) const = default;
};

struct BipartiteGraph {
  std::size_t num_instances = 0;
  std::vector<AnchorId> anchors;
  std::vector<InstanceEdge> ia_edges;
  std::vector<AnchorEdge> aa_edges;

  std::size_t num_anchors() const { return anchors.size(); }
  std::size_t num_nodes() const { return num_instances + anchors.size(); }

  // Throws ShapeMismatch if any index is out of range, a self-loop exists,
  // an aa pair is not ordered, or a weight is outside its allowed range.
  void validate() const;

  // {num_instances, anchors[], ia_edges[], aa_edges[]}; weights printed with
  // 9 significant digits. Extra top-level fields may be supplied by callers.
  std::string to_json(std::string_view config_hash = {}) const;
  static BipartiteGraph from_json(std::string_view text);

  bool operator==(const BipartiteGraph&) const = default;
};

struct GraphOptions {
  std::size_t top_k = 16;
  // A continuous anchor occurs in a row when its min-max weight exceeds this.
  double occurrence_threshold = 0.5;
};

struct CooccurrenceStats {
  std::size_t total_rows = 0;
  std::vector<std::size_t> marginal;
  std::unordered_map<std::uint64_t, std::size_t> joint_counts;  // key: pair_key(a, b)

  static std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }
  std::size_t joint(std::uint32_t a, std::uint32_t b) const;
  double p(std::uint32_t a) const;
  double p(std::uint32_t a, std::uint32_t b) const;
};

// Min-max weight of `value` against train [lo, hi], clamped to [0, 1].
// Constant columns give 0.5. NaN propagates (no edge).
double minmax_weight(double value, double lo, double hi);

std::vector<AnchorId> build_anchors(const TabularDataset& dataset);
std::vector<InstanceEdge> build_instance_edges(const TabularDataset& dataset, const std::vector<AnchorId>& anchors);
CooccurrenceStats count_cooccurrence(const TabularDataset& dataset, const std::vector<AnchorId>& anchors,
                                     double occurrence_threshold = GraphOptions{}.occurrence_threshold);

// max{0, ln(p(a,b) / (p(a) p(b)))}; 0 when a and b never co-occur.
double ppmi(const CooccurrenceStats& stats, std::uint32_t a, std::uint32_t b);

// Transductive graph over every row of every split. Never reads targets.
BipartiteGraph build_graph(const TabularDataset& dataset, const GraphOptions& options = {});

}  // namespace bolero
