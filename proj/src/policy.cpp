#include "igs/policy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace igs {

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::top_down: return "top_down";
    case PolicyKind::greedy_naive: return "greedy_naive";
    case PolicyKind::greedy_tree: return "greedy_tree";
    case PolicyKind::greedy_dag: return "greedy_dag";
    case PolicyKind::greedy_cost_sensitive: return "greedy_cost_sensitive";
  }
  return "?";
}

PolicyKind parse_policy(std::string_view text) {
  std::string name(text);
  for (char& c : name)
    if (c == '-') c = '_';
  if (name == "cost_sensitive") return PolicyKind::greedy_cost_sensitive;
  for (PolicyKind kind : kAllPolicies)
    if (name == to_string(kind)) return kind;
  throw Error(Errc::bad_parameter, "unknown policy '" + std::string(text) + "'");
}

std::shared_ptr<const SearchContext> make_context(const Hierarchy& h,
                                                  WeightMap weights,
                                                  PolicyConfig config,
                                                  std::optional<CostMap> costs) {
  if (weights.size() != h.size())
    throw Error(Errc::bad_parameter, "weight map does not match the hierarchy");
  if (h.roots().size() != 1)
    throw Error(Errc::bad_parameter, "hierarchy must have a single root");
  if (config.kind == PolicyKind::greedy_tree && !h.is_tree())
    throw Error(Errc::policy_mismatch, "greedy_tree requires a tree hierarchy");
  if (config.kind == PolicyKind::greedy_cost_sensitive && !costs)
    throw Error(Errc::policy_mismatch, "greedy_cost_sensitive requires prices");
  if (costs) {
    if (costs->c.size() != h.size())
      throw Error(Errc::bad_parameter, "cost map does not match the hierarchy");
    for (double c : costs->c)
      if (!(c > 0)) throw Error(Errc::bad_parameter, "prices must be positive");
  }
  auto ctx = std::make_shared<SearchContext>();
  ctx->hierarchy = &h;
  ctx->rounded = round_weights(weights, h.size());
  ctx->weights = std::move(weights);
  ctx->costs = std::move(costs);
  ctx->config = config;
  ctx->initial = std::make_shared<const SearchState>(init_state(*ctx));
  return ctx;
}

namespace {

bool is_view_policy(PolicyKind kind) {
  return kind == PolicyKind::top_down || kind == PolicyKind::greedy_naive ||
         kind == PolicyKind::greedy_cost_sensitive;
}

// Running argmin over (key, size, node): keys within `tol` tie, then the
// smaller live subgraph wins, then the earlier node.
struct MinPick {
  NodeId node = kNoNode;
  long double key = 0;
  std::int64_t size = 0;

  void offer(NodeId v, long double k, std::int64_t s, long double tol) {
    if (node == kNoNode || k < key - tol ||
        (k <= key + tol && (s < size || (s == size && v < node)))) {
      node = v;
      key = k;
      size = s;
    }
  }
};

long double tie_tolerance(long double scale, bool integer) {
  return integer ? 0.0L : 1e-12L * std::fabs(scale);
}

void require_open(const SearchState& state) {
  if (state.live_count <= 1)
    throw Error(Errc::already_resolved, "search already resolved");
}

template <typename Weight>
std::span<const Weight> base_weights(const SearchContext& ctx) {
  if constexpr (std::is_same_v<Weight, double>)
    return ctx.weights.p;
  else
    return ctx.rounded.w;
}

template <typename Weight>
Overlay<Weight>& tree_agg(SearchState& state) {
  if constexpr (std::is_same_v<Weight, double>)
    return state.agg_p;
  else
    return state.agg_w;
}

template <typename Weight>
const Overlay<Weight>& tree_agg(const SearchState& state) {
  if constexpr (std::is_same_v<Weight, double>)
    return state.agg_p;
  else
    return state.agg_w;
}

template <typename Weight>
Question naive_pick(const SearchContext& ctx, const SearchState& state) {
  const Hierarchy& h = ctx.h();
  const auto weights = base_weights<Weight>(ctx);
  Weight total = 0;
  for (NodeId v = 0; v < h.size(); ++v)
    if (state.view.is_live(v)) total += weights[v];
  const long double tol =
      tie_tolerance(static_cast<long double>(total), std::is_integral_v<Weight>);

  MinPick best;
  for (NodeId v = 0; v < h.size(); ++v) {
    if (!state.view.is_live(v) || v == state.root) continue;
    std::size_t count = 0;
    const Weight reach = reachable_set_weight(h, v, weights, state.view, &count);
    const long double balance =
        std::fabs(2.0L * static_cast<long double>(reach) -
                  static_cast<long double>(total));
    best.offer(v, balance, static_cast<std::int64_t>(count), tol);
  }
  return {best.node, state.questions_asked + 1, static_cast<double>(best.key)};
}

template <typename Weight>
Question cost_sensitive_pick(const SearchContext& ctx, const SearchState& state) {
  const Hierarchy& h = ctx.h();
  const auto weights = base_weights<Weight>(ctx);
  Weight total = 0;
  for (NodeId v = 0; v < h.size(); ++v)
    if (state.view.is_live(v)) total += weights[v];

  // Argmax of score; ties within relative 1e-12 go to the smaller side, then
  // the earlier node.
  NodeId best = kNoNode;
  long double best_score = 0;
  std::int64_t best_size = 0;
  long double best_balance = 0;
  for (NodeId v = 0; v < h.size(); ++v) {
    if (!state.view.is_live(v) || v == state.root) continue;
    std::size_t count = 0;
    const Weight reach = reachable_set_weight(h, v, weights, state.view, &count);
    const auto inside = static_cast<long double>(reach);
    const auto outside = static_cast<long double>(total - reach);
    const long double score = inside * outside / ctx.price(v);
    const auto size = static_cast<std::int64_t>(count);
    const long double tol =
        1e-12L * std::max(std::fabs(score), std::fabs(best_score));
    if (best == kNoNode || score > best_score + tol ||
        (score >= best_score - tol &&
         (size < best_size || (size == best_size && v < best)))) {
      best = v;
      best_score = score;
      best_size = size;
      best_balance = std::fabs(inside - outside);
    }
  }
  return {best, state.questions_asked + 1, static_cast<double>(best_balance)};
}

template <typename Weight>
Question tree_pick(const SearchContext& ctx, const SearchState& state) {
  const Hierarchy& h = ctx.h();
  const auto& agg = tree_agg<Weight>(state);
  const NodeId r = state.root;
  const auto total = static_cast<long double>(agg[r]);
  const long double tol = tie_tolerance(total, std::is_integral_v<Weight>);

  auto heavy_child = [&](NodeId u) {
    NodeId best = kNoNode;
    for (NodeId c : h.children(u))
      if (!state.removed[c] && (best == kNoNode || agg[c] > agg[best])) best = c;
    return best;
  };
  auto balance = [&](NodeId v) {
    return std::fabs(2.0L * static_cast<long double>(agg[v]) - total);
  };

  // Walk the weighted heavy path from the root while the subtree still holds
  // more than half the mass; the minimizer is among the visited nodes. Ties
  // keep the shallower node.
  NodeId v = heavy_child(r);
  NodeId best = v;
  long double best_balance = balance(v);
  while (2.0L * static_cast<long double>(agg[v]) > total) {
    const NodeId next = heavy_child(v);
    if (next == kNoNode) break;
    v = next;
    const long double b = balance(v);
    if (b < best_balance - tol) {
      best = v;
      best_balance = b;
    }
  }
  return {best, state.questions_asked + 1, static_cast<double>(best_balance)};
}

template <typename Weight>
void tree_apply(SearchState& state, const Hierarchy& h, NodeId q, Answer answer) {
  auto& agg = tree_agg<Weight>(state);
  if (answer == Answer::yes) {
    state.root = q;
  } else {
    const Weight delta = agg[q];
    const std::int64_t delta_size = state.size[q];
    for (NodeId u = h.parents(q).front();; u = h.parents(u).front()) {
      agg.at(u) -= delta;
      state.size.at(u) -= delta_size;
      if (u == state.root) break;
    }
    state.removed.at(q) = 1;
  }
  state.live_count = static_cast<std::size_t>(state.size[state.root]);
}

// Nodes reachable from `from` over nodes not marked removed.
std::vector<NodeId> live_reach(const Hierarchy& h, const SearchState& state,
                               NodeId from) {
  state.scratch.ensure(h.size());
  state.scratch.clear();
  std::vector<NodeId> out{from};
  state.scratch.mark(from);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (NodeId c : h.children(out[i]))
      if (!state.removed[c] && state.scratch.mark(c)) out.push_back(c);
  return out;
}

}  // namespace

template <typename Weight>
std::pair<std::vector<Weight>, std::vector<std::int64_t>> set_weight_dfs(
    const Hierarchy& h, NodeId r, std::span<const Weight> weights) {
  if (!h.is_tree()) throw Error(Errc::not_a_tree, "hierarchy is not a tree");
  std::vector<Weight> agg(h.size(), Weight{0});
  std::vector<std::int64_t> size(h.size(), 0);
  std::vector<NodeId> order{r};
  for (std::size_t i = 0; i < order.size(); ++i)
    for (NodeId c : h.children(order[i])) order.push_back(c);
  for (NodeId v : order) {
    agg[v] = weights[v];
    size[v] = 1;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId v = *it;
    if (v == r) continue;
    const NodeId parent = h.parents(v).front();
    agg[parent] += agg[v];
    size[parent] += size[v];
  }
  return {std::move(agg), std::move(size)};
}

template std::pair<std::vector<double>, std::vector<std::int64_t>>
set_weight_dfs<double>(const Hierarchy&, NodeId, std::span<const double>);
template std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>
set_weight_dfs<std::int64_t>(const Hierarchy&, NodeId,
                             std::span<const std::int64_t>);

SearchState init_state(const SearchContext& ctx) {
  if (ctx.initial) return *ctx.initial;
  const Hierarchy& h = ctx.h();
  SearchState state;
  state.root = h.root();
  state.live_count = h.size();
  const PolicyKind kind = ctx.config.kind;
  if (is_view_policy(kind)) {
    state.view = CandidateView(h);
    return state;
  }
  if (kind == PolicyKind::greedy_tree) {
    // Searches share the base aggregates and record only what they change.
    auto share = [](auto v) {
      return std::make_shared<const std::decay_t<decltype(v)>>(std::move(v));
    };
    std::vector<std::int64_t> size;
    if (ctx.integer_mode()) {
      std::vector<std::int64_t> agg;
      std::tie(agg, size) = set_weight_dfs<std::int64_t>(
          h, state.root, std::span<const std::int64_t>(ctx.rounded.w));
      state.agg_w = Overlay<std::int64_t>(share(std::move(agg)));
    } else {
      std::vector<double> agg;
      std::tie(agg, size) = set_weight_dfs<double>(
          h, state.root, std::span<const double>(ctx.weights.p));
      state.agg_p = Overlay<double>(share(std::move(agg)));
    }
    state.size = Overlay<std::int64_t>(share(std::move(size)));
    state.removed = Overlay<char>(share(std::vector<char>(h.size(), 0)));
    return state;
  }
  // greedy_dag: w(G_v) by one traversal per node.
  state.removed = Overlay<char>(std::vector<char>(h.size(), 0));
  std::vector<std::int64_t> agg(h.size(), 0), size(h.size(), 0);
  for (NodeId v = 0; v < h.size(); ++v) {
    const auto reach = live_reach(h, state, v);
    std::int64_t sum = 0;
    for (NodeId u : reach) sum += ctx.rounded.w[u];
    agg[v] = sum;
    size[v] = static_cast<std::int64_t>(reach.size());
  }
  state.agg_w = Overlay<std::int64_t>(std::move(agg));
  state.size = Overlay<std::int64_t>(std::move(size));
  state.scratch = VisitMarker();
  return state;
}

bool is_live(const SearchContext& ctx, const SearchState& state, NodeId v) {
  const Hierarchy& h = ctx.h();
  if (v >= h.size()) return false;
  switch (ctx.config.kind) {
    case PolicyKind::greedy_tree:
      for (NodeId u = v;; u = h.parents(u).front()) {
        if (state.removed[u]) return false;
        if (u == state.root) return true;
        if (h.parents(u).empty()) return false;
      }
    case PolicyKind::greedy_dag: {
      if (state.removed[v]) return false;
      for (NodeId u : live_reach(h, state, state.root))
        if (u == v) return true;
      return false;
    }
    default:
      return state.view.is_live(v);
  }
}

std::vector<NodeId> live_nodes(const SearchContext& ctx,
                               const SearchState& state) {
  if (is_view_policy(ctx.config.kind)) return state.view.live_nodes();
  auto nodes = live_reach(ctx.h(), state, state.root);
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

Question top_down_next(const SearchContext& ctx, const SearchState& state) {
  require_open(state);
  for (NodeId c : ctx.h().children(state.root))
    if (state.view.is_live(c)) return {c, state.questions_asked + 1, 0.0};
  throw std::logic_error("live root without live children");
}

Question greedy_naive_next(const SearchContext& ctx, const SearchState& state) {
  require_open(state);
  return ctx.integer_mode() ? naive_pick<std::int64_t>(ctx, state)
                            : naive_pick<double>(ctx, state);
}

Question cost_sensitive_next(const SearchContext& ctx, const SearchState& state) {
  require_open(state);
  return ctx.integer_mode() ? cost_sensitive_pick<std::int64_t>(ctx, state)
                            : cost_sensitive_pick<double>(ctx, state);
}

Question greedy_tree_next(const SearchContext& ctx, const SearchState& state) {
  require_open(state);
  return ctx.integer_mode() ? tree_pick<std::int64_t>(ctx, state)
                            : tree_pick<double>(ctx, state);
}

Question greedy_dag_next(const SearchContext& ctx, const SearchState& state) {
  require_open(state);
  const Hierarchy& h = ctx.h();
  const NodeId r = state.root;
  const std::int64_t total = state.agg_w[r];

  MinPick best;
  state.scratch.ensure(h.size());
  state.scratch.clear();
  std::vector<NodeId> queue{r};
  state.scratch.mark(r);
  for (std::size_t i = 0; i < queue.size(); ++i) {
    for (NodeId c : h.children(queue[i])) {
      if (state.removed[c] || !state.scratch.mark(c)) continue;
      const std::int64_t balance = std::abs(2 * state.agg_w[c] - total);
      best.offer(c, static_cast<long double>(balance), state.size[c], 0.0L);
      // Descendants of c weigh at most w(G_c), so they cannot beat it.
      if (!ctx.config.prune || 2 * state.agg_w[c] > total) queue.push_back(c);
    }
  }
  return {best.node, state.questions_asked + 1, static_cast<double>(best.key)};
}

Question next_question(const SearchContext& ctx, const SearchState& state) {
  switch (ctx.config.kind) {
    case PolicyKind::top_down: return top_down_next(ctx, state);
    case PolicyKind::greedy_naive: return greedy_naive_next(ctx, state);
    case PolicyKind::greedy_tree: return greedy_tree_next(ctx, state);
    case PolicyKind::greedy_dag: return greedy_dag_next(ctx, state);
    case PolicyKind::greedy_cost_sensitive: return cost_sensitive_next(ctx, state);
  }
  throw std::logic_error("unknown policy");
}

void greedy_tree_apply(const SearchContext& ctx, SearchState& state, NodeId q,
                       Answer answer) {
  if (ctx.integer_mode())
    tree_apply<std::int64_t>(state, ctx.h(), q, answer);
  else
    tree_apply<double>(state, ctx.h(), q, answer);
}

void adjust_weight(const SearchContext& ctx, SearchState& state,
                   NodeId deleted) {
  const Hierarchy& h = ctx.h();
  const std::int64_t w = ctx.rounded.w[deleted];
  state.scratch.ensure(h.size());
  state.scratch.clear();
  std::vector<NodeId> queue{deleted};
  state.scratch.mark(deleted);
  for (std::size_t i = 0; i < queue.size(); ++i) {
    for (NodeId parent : h.parents(queue[i])) {
      if (state.removed[parent] || !state.scratch.mark(parent)) continue;
      state.agg_w.at(parent) -= w;
      state.size.at(parent) -= 1;
      queue.push_back(parent);
    }
  }
}

void greedy_dag_apply(const SearchContext& ctx, SearchState& state, NodeId q,
                      Answer answer) {
  if (answer == Answer::yes) {
    state.root = q;
  } else {
    const auto doomed = live_reach(ctx.h(), state, q);
    for (NodeId u : doomed) adjust_weight(ctx, state, u);
    for (NodeId u : doomed) state.removed.at(u) = 1;
  }
  state.live_count = static_cast<std::size_t>(state.size[state.root]);
}

namespace {

void apply_unchecked(const SearchContext& ctx, SearchState& state, NodeId q,
                     Answer answer) {
  switch (ctx.config.kind) {
    case PolicyKind::greedy_tree:
      greedy_tree_apply(ctx, state, q, answer);
      break;
    case PolicyKind::greedy_dag:
      greedy_dag_apply(ctx, state, q, answer);
      break;
    default:
      apply_answer_in_place(state.view, ctx.h(), q, answer);
      state.root = state.view.root();
      state.live_count = state.view.live_count();
      break;
  }
  ++state.questions_asked;
}

}  // namespace

void apply_answer(const SearchContext& ctx, SearchState& state,
                  const Question& q, Answer answer) {
  require_open(state);
  if (q.ordinal != state.questions_asked + 1)
    throw Error(Errc::stale_question,
                "question " + std::to_string(q.ordinal) + " is not pending (next is " +
                    std::to_string(state.questions_asked + 1) + ")");
  if (!is_live(ctx, state, q.node))
    throw Error(Errc::stale_question, "query node is no longer a candidate");
  if (q.node == state.root)
    throw Error(Errc::uninformative_query, "querying the candidate root");
  apply_unchecked(ctx, state, q.node, answer);
}

Oracle::Oracle(const Hierarchy& h, NodeId target)
    : ancestor_(h.size(), 0), target_(target) {
  if (target >= h.size()) throw Error(Errc::unknown_node, "unknown target");
  std::vector<NodeId> queue{target};
  ancestor_[target] = 1;
  for (std::size_t i = 0; i < queue.size(); ++i)
    for (NodeId p : h.parents(queue[i]))
      if (!ancestor_[p]) {
        ancestor_[p] = 1;
        queue.push_back(p);
      }
}

Search::Search(std::shared_ptr<const SearchContext> ctx)
    : ctx_(std::move(ctx)), state_(init_state(*ctx_)) {
  if (state_.live_count == 1) transcript_.result = state_.root;
}

const Question& Search::ask() {
  if (!pending_) pending_ = next_question(*ctx_, state_);
  return *pending_;
}

void Search::answer(Answer a) {
  if (!pending_) throw Error(Errc::stale_question, "no pending question");
  const Question q = *pending_;
  apply_unchecked(*ctx_, state_, q.node, a);
  record(q, a);
}

void Search::apply(const Question& q, Answer a) {
  apply_answer(*ctx_, state_, q, a);
  record(q, a);
}

void Search::record(const Question& q, Answer a) {
  pending_.reset();
  transcript_.steps.push_back({q, a});
  transcript_.total_price += ctx_->price(q.node);
  if (state_.live_count == 1) transcript_.result = state_.root;
}

Transcript run_search(std::shared_ptr<const SearchContext> ctx,
                      const Oracle& oracle) {
  const std::size_t limit = ctx->h().size();
  Search search(std::move(ctx));
  while (!search.resolved()) {
    if (search.transcript().questions() >= limit)
      throw std::logic_error("search failed to make progress");
    search.answer(oracle(search.ask().node));
  }
  return search.transcript();
}

Transcript run_search(std::shared_ptr<const SearchContext> ctx, NodeId target) {
  const Oracle oracle(ctx->h(), target);
  return run_search(std::move(ctx), oracle);
}

}  // namespace igs
