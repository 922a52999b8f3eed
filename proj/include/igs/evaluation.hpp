#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "igs/distribution.hpp"
#include "igs/hierarchy.hpp"
#include "igs/policy.hpp"

namespace igs {

/// Binary strategy tree. Internal nodes carry a query; yes goes to `yes`,
/// no to `no`. Leaves carry the identified target. nodes[0] is the root.
struct DecisionTree {
  struct Node {
    NodeId query = kNoNode;
    NodeId target = kNoNode;
    std::int32_t yes = -1;
    std::int32_t no = -1;

    bool leaf() const { return query == kNoNode; }
  };
  std::vector<Node> nodes;

  std::size_t leaf_count() const;
  std::size_t internal_count() const { return nodes.size() - leaf_count(); }
};

struct LeafInfo {
  NodeId target = kNoNode;
  std::size_t depth = 0;
  double price = 0;
};

/// Every reachable answer branch of the policy, explored recursively.
DecisionTree build_decision_tree(std::shared_ptr<const SearchContext> ctx);

/// Leaves with their question count and, if `costs` is given, the summed price
/// of the queries on their path. Leaves are listed in depth-first order.
std::vector<LeafInfo> leaves(const DecisionTree& tree,
                             const CostMap* costs = nullptr);

/// sum_v p(v) * depth(v). Throws leaf_mismatch unless the leaves are exactly
/// the nodes the weights range over.
double expected_cost(const DecisionTree& tree, const WeightMap& weights);
double expected_cost_sensitive(const DecisionTree& tree,
                               const WeightMap& weights, const CostMap& costs);

/// Exact minimum expected cost over all strategies, by memoized recursion on
/// the candidate set. Throws too_large when n > 16.
double optimal_expected_cost(const Hierarchy& h, const WeightMap& weights,
                             const CostMap* costs = nullptr);

inline constexpr std::size_t kMaxExactNodes = 16;

/// Fixed strategy: ask the first live non-root node in `priority`; once the
/// list is exhausted, the first live non-root node in input order.
NodeId priority_next(const Hierarchy& h, const CandidateView& view,
                     std::span<const NodeId> priority);
DecisionTree build_priority_tree(const Hierarchy& h,
                                 std::span<const NodeId> priority);

/// Question count per target node, indexed by NodeId.
std::vector<std::size_t> depth_by_target(const DecisionTree& tree,
                                         std::size_t n);

/// The seven-node vehicle hierarchy with per-category object counts for 100
/// images and two fixed question orders.
struct VehicleGolden {
  Hierarchy hierarchy;
  std::vector<std::uint64_t> objects;
  std::vector<std::vector<NodeId>> strategies;
};
VehicleGolden vehicle_golden();
inline constexpr const char* kVehicleEdges =
    "Vehicle\tCar\n"
    "Car\tMercedes\n"
    "Car\tHonda\n"
    "Car\tNissan\n"
    "Nissan\tMaxima\n"
    "Nissan\tSentra\n";

struct BatchOptions {
  PolicyConfig config;
  /// Offline mode uses these weights for every object; online mode (nullopt)
  /// learns them from the stream, starting uniform.
  std::optional<WeightMap> offline;
  std::optional<CostMap> costs;
  std::size_t window = 10000;
  /// When non-empty, replays this fixed question order instead of the policy.
  std::vector<NodeId> priority;
};

struct EvalReport {
  std::size_t objects = 0;
  double total_cost = 0;
  double mean_cost = 0;
  /// Mean cost of each consecutive block of `window` objects; the last block
  /// may be shorter.
  std::vector<double> window_means;
  /// Mean cost per target over its occurrences in the stream (0 if absent).
  std::vector<double> per_target_cost;
  std::vector<std::size_t> per_target_count;
};

EvalReport batch_evaluate(const Hierarchy& h, std::span<const NodeId> stream,
                          const BatchOptions& options);

/// Mean candidate-set size after k questions, averaged over every target
/// (runs that finished early count as 1). Entry k is the value after k
/// questions; the last entry is 1.
std::vector<double> css_curve(std::shared_ptr<const SearchContext> ctx);

struct ProbeResult {
  PolicyKind kind = PolicyKind::greedy_naive;
  std::size_t searches = 0;
  /// Median over repetitions of the mean time per search.
  double seconds_per_search = 0;
};

/// Times complete searches (state initialization included) for targets drawn
/// from each depth level.
std::vector<ProbeResult> runtime_probe(const Hierarchy& h,
                                       const WeightMap& weights,
                                       std::span<const PolicyKind> kinds,
                                       std::size_t targets_per_depth,
                                       std::uint64_t seed,
                                       std::size_t repetitions = 5);

/// Targets grouped by breadth-first depth, up to `per_depth` random picks each.
std::vector<NodeId> sample_targets_by_depth(const Hierarchy& h,
                                            std::size_t per_depth,
                                            std::uint64_t seed);

/// Draws `count` targets i.i.d. from `weights`.
std::vector<NodeId> sample_stream(const WeightMap& weights, std::size_t count,
                                  std::uint64_t seed);

/// Random recursive tree: node i hangs under a uniform earlier node.
Hierarchy random_tree(std::size_t n, std::uint64_t seed);
/// Random recursive tree plus `extra_edges` additional forward edges between
/// random node pairs (duplicates skipped). Single root, acyclic.
Hierarchy random_dag(std::size_t n, std::size_t extra_edges,
                     std::uint64_t seed);

std::string to_dot(const DecisionTree& tree, const Hierarchy& h);
std::string css_to_csv(const std::vector<double>& curve);
std::string probe_to_csv(const std::vector<ProbeResult>& results,
                         std::size_t n);

}  // namespace igs
