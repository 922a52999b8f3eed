#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "igs/distribution.hpp"
#include "igs/hierarchy.hpp"

namespace igs {

enum class PolicyKind {
  top_down,
  greedy_naive,
  greedy_tree,
  greedy_dag,
  greedy_cost_sensitive,
};

inline constexpr PolicyKind kAllPolicies[] = {
    PolicyKind::top_down, PolicyKind::greedy_naive, PolicyKind::greedy_tree,
    PolicyKind::greedy_dag, PolicyKind::greedy_cost_sensitive};

const char* to_string(PolicyKind kind);
/// Accepts the enum spelling, with '-' or '_'. Throws bad_parameter.
PolicyKind parse_policy(std::string_view text);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::greedy_naive;
  /// Score splits with rounded integer weights instead of raw probabilities.
  /// greedy_dag always does.
  bool rounded = false;
  /// greedy_dag only: skip descendants of nodes with 2w(v) <= w(root).
  bool prune = true;
};

struct SearchState;

/// Immutable inputs shared by every search over one hierarchy and
/// distribution. The hierarchy must outlive the context.
struct SearchContext {
  const Hierarchy* hierarchy = nullptr;
  WeightMap weights;
  RoundedWeightMap rounded;
  std::optional<CostMap> costs;
  PolicyConfig config;
  /// State before the first question; searches start from a copy.
  std::shared_ptr<const SearchState> initial;

  const Hierarchy& h() const { return *hierarchy; }
  double price(NodeId v) const { return costs ? costs->c[v] : 1.0; }
  /// Whether splits are scored on rounded weights.
  bool integer_mode() const {
    return config.kind == PolicyKind::greedy_dag || config.rounded;
  }
};

/// Validates the configuration (greedy_tree needs a tree, cost-sensitive
/// needs prices) and precomputes rounded weights.
std::shared_ptr<const SearchContext> make_context(
    const Hierarchy& h, WeightMap weights, PolicyConfig config,
    std::optional<CostMap> costs = std::nullopt);

struct Question {
  NodeId node = kNoNode;
  /// 1-based position in the transcript.
  std::size_t ordinal = 0;
  /// |2 weight(G_q) - weight(G)|, in the weight units the policy scores with.
  double balance = 0;
};

struct Step {
  Question question;
  Answer answer = Answer::no;
};

struct Transcript {
  std::vector<Step> steps;
  NodeId result = kNoNode;
  double total_price = 0;

  bool resolved() const { return result != kNoNode; }
  std::size_t questions() const { return steps.size(); }
};

/// Per-search view of an array shared by every search on one context. A
/// sparse overlay stores only the entries this search changed; a dense one
/// owns a full copy.
template <typename T>
class Overlay {
 public:
  Overlay() = default;
  explicit Overlay(std::shared_ptr<const std::vector<T>> base) : base_(std::move(base)) {}
  explicit Overlay(std::vector<T> dense) : own_(std::move(dense)) {}

  T operator[](NodeId v) const {
    if (!own_.empty()) return own_[v];
    if (!changed_.empty()) {
      auto it = changed_.find(v);
      if (it != changed_.end()) return it->second;
    }
    return (*base_)[v];
  }
  T& at(NodeId v) {
    if (!own_.empty()) return own_[v];
    return changed_.try_emplace(v, (*base_)[v]).first->second;
  }
  std::size_t size() const { return own_.empty() && base_ ? base_->size() : own_.size(); }

 private:
  std::shared_ptr<const std::vector<T>> base_;
  std::vector<T> own_;
  std::unordered_map<NodeId, T> changed_;
};

/// Per-search mutable state. Which fields are populated depends on the policy:
/// view-based policies (top_down, greedy_naive, greedy_cost_sensitive) keep a
/// CandidateView; greedy_tree and greedy_dag keep cached subgraph aggregates
/// over the base graph plus deletion marks.
struct SearchState {
  CandidateView view;
  /// greedy_tree: p(T_v). Sparse for greedy_tree, dense for greedy_dag.
  Overlay<double> agg_p;
  /// greedy_dag (and rounded greedy_tree): w(G_v) over live nodes.
  Overlay<std::int64_t> agg_w;
  /// greedy_tree: |T_v|; greedy_dag: number of live nodes reachable from v.
  Overlay<std::int64_t> size;
  /// greedy_tree marks only the cut node; greedy_dag marks every deleted node.
  Overlay<char> removed;
  NodeId root = kNoNode;
  std::size_t live_count = 0;
  std::size_t questions_asked = 0;

  mutable VisitMarker scratch;
};

/// A copy of ctx.initial, or a freshly built start state when it is unset.
SearchState init_state(const SearchContext& ctx);

bool is_live(const SearchContext& ctx, const SearchState& state, NodeId v);
std::vector<NodeId> live_nodes(const SearchContext& ctx,
                               const SearchState& state);

/// The policy's next query; does not modify state. Throws already_resolved
/// once a single candidate is left.
Question next_question(const SearchContext& ctx, const SearchState& state);

Question top_down_next(const SearchContext& ctx, const SearchState& state);
Question greedy_naive_next(const SearchContext& ctx, const SearchState& state);
Question greedy_tree_next(const SearchContext& ctx, const SearchState& state);
Question greedy_dag_next(const SearchContext& ctx, const SearchState& state);
Question cost_sensitive_next(const SearchContext& ctx, const SearchState& state);

/// Subtree aggregates p(T_v) and |T_v| for every v under r. Throws not_a_tree.
template <typename Weight>
std::pair<std::vector<Weight>, std::vector<std::int64_t>> set_weight_dfs(
    const Hierarchy& h, NodeId r, std::span<const Weight> weights);

/// Applies an answer to any live, non-root node. The question's ordinal must
/// be the next one (stale_question otherwise).
void apply_answer(const SearchContext& ctx, SearchState& state,
                  const Question& q, Answer answer);

void greedy_tree_apply(const SearchContext& ctx, SearchState& state, NodeId q,
                       Answer answer);
void greedy_dag_apply(const SearchContext& ctx, SearchState& state, NodeId q,
                      Answer answer);
/// Reverse breadth-first pass from `deleted` over non-deleted ancestors,
/// removing its weight (and count) from each distinct ancestor once.
void adjust_weight(const SearchContext& ctx, SearchState& state,
                   NodeId deleted);

/// Answers reach(q) truthfully for a fixed target.
class Oracle {
 public:
  Oracle(const Hierarchy& h, NodeId target);
  Answer operator()(NodeId q) const {
    return ancestor_[q] ? Answer::yes : Answer::no;
  }
  NodeId target() const { return target_; }

 private:
  std::vector<char> ancestor_;
  NodeId target_;
};

/// One search with its transcript.
class Search {
 public:
  explicit Search(std::shared_ptr<const SearchContext> ctx);

  bool resolved() const { return state_.live_count <= 1; }
  NodeId result() const { return transcript_.result; }
  std::size_t live_count() const { return state_.live_count; }
  NodeId root() const { return state_.root; }
  bool is_live(NodeId v) const { return igs::is_live(*ctx_, state_, v); }

  /// The policy's next question; repeated calls return the same question.
  const Question& ask();
  /// Answers the question returned by ask().
  void answer(Answer a);
  /// Answers an arbitrary question (validated).
  void apply(const Question& q, Answer a);

  const Transcript& transcript() const { return transcript_; }
  const SearchState& state() const { return state_; }
  const SearchContext& context() const { return *ctx_; }
  std::shared_ptr<const SearchContext> shared_context() const { return ctx_; }

 private:
  void record(const Question& q, Answer a);

  std::shared_ptr<const SearchContext> ctx_;
  SearchState state_;
  Transcript transcript_;
  std::optional<Question> pending_;
};

Transcript run_search(std::shared_ptr<const SearchContext> ctx, NodeId target);
Transcript run_search(std::shared_ptr<const SearchContext> ctx,
                      const Oracle& oracle);

}  // namespace igs
