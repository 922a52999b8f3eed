#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "igs/error.hpp"

namespace igs {

/// Dense node index in [0, n). Labels map bijectively onto indices in
/// first-seen input order.
using NodeId = std::uint32_t;

inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

enum class Answer { yes, no };

/// Immutable category hierarchy: a DAG with forward and reverse adjacency.
/// Children keep first-seen input order, which is the tie-break order used by
/// every policy downstream.
class Hierarchy {
 public:
  Hierarchy() = default;

  /// Builds and validates the graph. Throws Error(cycle_detected) with a
  /// witness cycle in the message. Duplicate edges must already be removed.
  Hierarchy(std::vector<std::string> labels,
            std::vector<std::pair<NodeId, NodeId>> edges,
            NodeId synthetic_root = kNoNode);

  std::size_t size() const { return labels_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  /// The unique in-degree-zero node. Throws bad_parameter when the graph has
  /// several roots; call ensure_single_root first.
  NodeId root() const;
  std::span<const NodeId> roots() const { return roots_; }

  std::span<const NodeId> children(NodeId v) const { return children_[v]; }
  std::span<const NodeId> parents(NodeId v) const { return parents_[v]; }
  const std::string& label(NodeId v) const { return labels_[v]; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }

  std::optional<NodeId> find(std::string_view label) const;
  /// Like find, but throws Error(unknown_node).
  NodeId index(std::string_view label) const;

  /// Every non-root node has exactly one parent and m = n - 1.
  bool is_tree() const;

  /// Nodes in a topological order (parents before children).
  const std::vector<NodeId>& topo_order() const { return topo_; }

  /// Root added by ensure_single_root, or kNoNode. It is never a target.
  NodeId synthetic_root() const { return synthetic_root_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::vector<NodeId>> parents_;
  std::vector<NodeId> roots_;
  std::vector<NodeId> topo_;
  NodeId synthetic_root_ = kNoNode;
};

struct LoadReport {
  std::size_t duplicate_edges = 0;
};

/// Parses `parent<TAB>child` lines. A line holding a single label declares an
/// isolated node; blank lines and `#` comments are skipped.
Hierarchy load_hierarchy(std::string_view text, LoadReport* report = nullptr);
Hierarchy load_hierarchy_file(const std::string& path,
                              LoadReport* report = nullptr);

/// Edge-list text accepted by load_hierarchy.
std::string serialize(const Hierarchy& h);

/// Adds a synthetic root above every in-degree-zero node when there is more
/// than one. The synthetic root is appended as the last index.
Hierarchy ensure_single_root(const Hierarchy& h,
                             const std::string& root_label = "__root__");

struct HierarchyStats {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t height = 0;
  std::size_t max_out_degree = 0;
  bool is_tree = true;
};

HierarchyStats stats(const Hierarchy& h);

/// Candidate subgraph as a membership overlay on a shared hierarchy.
class CandidateView {
 public:
  CandidateView() = default;
  explicit CandidateView(const Hierarchy& h);

  bool is_live(NodeId v) const { return member_[v] != 0; }
  std::size_t live_count() const { return live_count_; }
  NodeId root() const { return root_; }
  std::vector<NodeId> live_nodes() const;

 private:
  friend CandidateView apply_answer(const CandidateView&, const Hierarchy&,
                                    NodeId, Answer);
  friend void apply_answer_in_place(CandidateView&, const Hierarchy&, NodeId,
                                    Answer);

  std::vector<char> member_;
  std::size_t live_count_ = 0;
  NodeId root_ = kNoNode;
};

/// Live nodes reachable from u over live nodes, u included.
std::vector<NodeId> reachable_set(const Hierarchy& h, NodeId u,
                                  const CandidateView& view);

/// Sum of weights over reachable_set(h, u, view). Each call clears its visit
/// marks over the whole graph before the traversal.
template <typename Weight>
Weight reachable_set_weight(const Hierarchy& h, NodeId u,
                            std::span<const Weight> weights,
                            const CandidateView& view,
                            std::size_t* count = nullptr);

extern template double reachable_set_weight<double>(
    const Hierarchy&, NodeId, std::span<const double>, const CandidateView&,
    std::size_t*);
extern template std::int64_t reachable_set_weight<std::int64_t>(
    const Hierarchy&, NodeId, std::span<const std::int64_t>,
    const CandidateView&, std::size_t*);

/// Candidate update: yes keeps reach(q), no removes it. Throws node_not_live for
/// a dead q and uninformative_query for the current root.
CandidateView apply_answer(const CandidateView& view, const Hierarchy& h,
                           NodeId q, Answer answer);
void apply_answer_in_place(CandidateView& view, const Hierarchy& h, NodeId q,
                           Answer answer);

/// Generation-stamped visit marks; clearing is O(1).
class VisitMarker {
 public:
  explicit VisitMarker(std::size_t n = 0) : stamp_(n, 0) {}

  void resize(std::size_t n) { stamp_.assign(n, 0), epoch_ = 1; }
  void ensure(std::size_t n) {
    if (stamp_.size() != n) resize(n);
  }
  void clear() {
    if (++epoch_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      epoch_ = 1;
    }
  }
  bool test(NodeId v) const { return stamp_[v] == epoch_; }
  /// Marks v; returns false if it was already marked.
  bool mark(NodeId v) {
    if (stamp_[v] == epoch_) return false;
    stamp_[v] = epoch_;
    return true;
  }

 private:
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 1;
};

}  // namespace igs
