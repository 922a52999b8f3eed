#include "igs/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <unordered_map>

namespace igs {

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(),
                    [](const Node& node) { return node.leaf(); }));
}

namespace {

// Grows the strategy tree below `state`. Copies of the state are made for the
// yes branch only; the no branch reuses the argument.
template <typename State, typename Ask, typename Answer_, typename Done,
          typename Result>
std::int32_t grow(DecisionTree& tree, State state, const Ask& ask,
                  const Answer_& answer, const Done& done,
                  const Result& result) {
  const auto id = static_cast<std::int32_t>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (done(state)) {
    tree.nodes[id].target = result(state);
    return id;
  }
  const NodeId q = ask(state);
  State yes = state;
  answer(yes, q, Answer::yes);
  answer(state, q, Answer::no);
  const auto y = grow(tree, std::move(yes), ask, answer, done, result);
  const auto n = grow(tree, std::move(state), ask, answer, done, result);
  tree.nodes[id].query = q;
  tree.nodes[id].yes = y;
  tree.nodes[id].no = n;
  return id;
}

}  // namespace

DecisionTree build_decision_tree(std::shared_ptr<const SearchContext> ctx) {
  DecisionTree tree;
  grow(
      tree, Search(std::move(ctx)),
      [](Search& s) { return s.ask().node; },
      [](Search& s, NodeId, Answer a) { s.answer(a); },
      [](const Search& s) { return s.resolved(); },
      [](const Search& s) { return s.result(); });
  return tree;
}

std::vector<LeafInfo> leaves(const DecisionTree& tree, const CostMap* costs) {
  std::vector<LeafInfo> out;
  if (tree.nodes.empty()) return out;
  struct Frame {
    std::int32_t id;
    std::size_t depth;
    double price;
  };
  std::vector<Frame> stack{{0, 0, 0.0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const auto& node = tree.nodes[f.id];
    if (node.leaf()) {
      out.push_back({node.target, f.depth, f.price});
      continue;
    }
    const double step = costs ? costs->c[node.query] : 1.0;
    stack.push_back({node.no, f.depth + 1, f.price + step});
    stack.push_back({node.yes, f.depth + 1, f.price + step});
  }
  return out;
}

namespace {

double weighted_leaf_sum(const DecisionTree& tree, const WeightMap& weights,
                         const CostMap* costs) {
  const auto info = leaves(tree, costs);
  std::vector<char> seen(weights.size(), 0);
  if (info.size() != weights.size())
    throw Error(Errc::leaf_mismatch,
                "decision tree has " + std::to_string(info.size()) +
                    " leaves for " + std::to_string(weights.size()) + " nodes");
  double sum = 0;
  for (const auto& leaf : info) {
    if (leaf.target >= weights.size() || seen[leaf.target])
      throw Error(Errc::leaf_mismatch, "decision tree leaves are not a bijection");
    seen[leaf.target] = 1;
    sum += weights.p[leaf.target] * leaf.price;
  }
  return sum;
}

}  // namespace

double expected_cost(const DecisionTree& tree, const WeightMap& weights) {
  return weighted_leaf_sum(tree, weights, nullptr);
}

double expected_cost_sensitive(const DecisionTree& tree,
                               const WeightMap& weights, const CostMap& costs) {
  return weighted_leaf_sum(tree, weights, &costs);
}

double optimal_expected_cost(const Hierarchy& h, const WeightMap& weights,
                             const CostMap* costs) {
  const std::size_t n = h.size();
  if (n > kMaxExactNodes)
    throw Error(Errc::too_large, "exact optimum supports at most " +
                                     std::to_string(kMaxExactNodes) + " nodes");
  if (weights.size() != n)
    throw Error(Errc::bad_parameter, "weight map does not match the hierarchy");

  // Within any candidate set S, the live reach of q is reach(q) & S.
  std::vector<std::uint32_t> reach(n, 0);
  const auto& topo = h.topo_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const NodeId v = *it;
    reach[v] = 1u << v;
    for (NodeId c : h.children(v)) reach[v] |= reach[c];
  }

  std::vector<double> memo(std::size_t{1} << n, -1.0);
  std::function<double(std::uint32_t)> solve = [&](std::uint32_t s) -> double {
    if (std::popcount(s) <= 1) return 0.0;
    double& slot = memo[s];
    if (slot >= 0) return slot;
    double mass = 0;
    for (NodeId v = 0; v < n; ++v)
      if (s >> v & 1u) mass += weights.p[v];
    double best = -1;
    for (NodeId q = 0; q < n; ++q) {
      if (!(s >> q & 1u)) continue;
      const std::uint32_t in = s & reach[q];
      const std::uint32_t out = s & ~reach[q];
      if (out == 0) continue;
      const double price = costs ? costs->c[q] : 1.0;
      const double value = price * mass + solve(in) + solve(out);
      if (best < 0 || value < best) best = value;
    }
    slot = best;
    return best;
  };
  const std::uint32_t full =
      n == 32 ? ~0u : static_cast<std::uint32_t>((std::uint64_t{1} << n) - 1);
  return solve(full);
}

NodeId priority_next(const Hierarchy& h, const CandidateView& view,
                     std::span<const NodeId> priority) {
  for (NodeId v : priority)
    if (view.is_live(v) && v != view.root()) return v;
  for (NodeId v = 0; v < h.size(); ++v)
    if (view.is_live(v) && v != view.root()) return v;
  throw Error(Errc::already_resolved, "search already resolved");
}

DecisionTree build_priority_tree(const Hierarchy& h,
                                 std::span<const NodeId> priority) {
  DecisionTree tree;
  grow(
      tree, CandidateView(h),
      [&](const CandidateView& v) { return priority_next(h, v, priority); },
      [&](CandidateView& v, NodeId q, Answer a) {
        apply_answer_in_place(v, h, q, a);
      },
      [](const CandidateView& v) { return v.live_count() <= 1; },
      [](const CandidateView& v) { return v.root(); });
  return tree;
}

std::vector<std::size_t> depth_by_target(const DecisionTree& tree,
                                         std::size_t n) {
  std::vector<std::size_t> out(n, 0);
  for (const auto& leaf : leaves(tree)) {
    if (leaf.target >= n)
      throw Error(Errc::leaf_mismatch, "leaf outside the hierarchy");
    out[leaf.target] = leaf.depth;
  }
  return out;
}

VehicleGolden vehicle_golden() {
  VehicleGolden g{load_hierarchy(kVehicleEdges), {}, {}};
  const Hierarchy& h = g.hierarchy;
  auto ids = [&](std::initializer_list<const char*> labels) {
    std::vector<NodeId> out;
    for (const char* label : labels) out.push_back(h.index(label));
    return out;
  };
  g.objects.assign(h.size(), 0);
  const std::pair<const char*, std::uint64_t> counts[] = {
      {"Vehicle", 4}, {"Car", 2},     {"Mercedes", 2}, {"Honda", 4},
      {"Nissan", 8},  {"Maxima", 40}, {"Sentra", 40}};
  for (const auto& [label, count] : counts) g.objects[h.index(label)] = count;
  g.strategies.push_back(ids({"Nissan", "Car", "Honda", "Mercedes"}));
  g.strategies.push_back(
      ids({"Maxima", "Sentra", "Nissan", "Car", "Honda", "Mercedes"}));
  return g;
}

EvalReport batch_evaluate(const Hierarchy& h, std::span<const NodeId> stream,
                          const BatchOptions& options) {
  EvalReport report;
  report.per_target_cost.assign(h.size(), 0.0);
  report.per_target_count.assign(h.size(), 0);
  if (stream.empty()) return report;
  for (NodeId t : stream)
    if (t >= h.size()) throw Error(Errc::unknown_node, "target outside the hierarchy");

  const std::size_t window = std::max<std::size_t>(options.window, 1);
  std::shared_ptr<const SearchContext> fixed;
  std::vector<double> cached(h.size(), -1.0);
  OnlineLearner learner;
  if (!options.priority.empty()) {
    const auto tree = build_priority_tree(h, options.priority);
    for (const auto& leaf : leaves(tree, options.costs ? &*options.costs : nullptr))
      cached[leaf.target] = leaf.price;
  } else if (options.offline) {
    fixed = make_context(h, *options.offline, options.config, options.costs);
  } else {
    learner = OnlineLearner(h.size(), h.synthetic_root());
  }

  double window_sum = 0;
  std::size_t in_window = 0;
  for (NodeId target : stream) {
    double cost;
    if (!options.priority.empty()) {
      cost = cached[target];
    } else if (fixed) {
      // Offline searches are deterministic per target.
      if (cached[target] < 0) cached[target] = run_search(fixed, target).total_price;
      cost = cached[target];
    } else {
      auto ctx = make_context(h, learner.current(), options.config, options.costs);
      cost = run_search(std::move(ctx), target).total_price;
      learner.observe(target);
    }
    report.total_cost += cost;
    report.per_target_cost[target] += cost;
    ++report.per_target_count[target];
    window_sum += cost;
    if (++in_window == window) {
      report.window_means.push_back(window_sum / static_cast<double>(window));
      window_sum = 0;
      in_window = 0;
    }
  }
  if (in_window > 0)
    report.window_means.push_back(window_sum / static_cast<double>(in_window));
  report.objects = stream.size();
  report.mean_cost = report.total_cost / static_cast<double>(stream.size());
  for (NodeId v = 0; v < h.size(); ++v)
    if (report.per_target_count[v] > 0)
      report.per_target_cost[v] /= static_cast<double>(report.per_target_count[v]);
  return report;
}

std::vector<double> css_curve(std::shared_ptr<const SearchContext> ctx) {
  const Hierarchy& h = ctx->h();
  std::vector<std::vector<std::size_t>> runs;
  std::size_t longest = 0;
  for (NodeId target = 0; target < h.size(); ++target) {
    if (target == h.synthetic_root()) continue;
    const Oracle oracle(h, target);
    Search search(ctx);
    std::vector<std::size_t> sizes{search.live_count()};
    while (!search.resolved()) {
      search.answer(oracle(search.ask().node));
      sizes.push_back(search.live_count());
    }
    longest = std::max(longest, sizes.size());
    runs.push_back(std::move(sizes));
  }
  std::vector<double> curve(longest, 0.0);
  for (const auto& sizes : runs)
    for (std::size_t k = 0; k < longest; ++k)
      curve[k] += static_cast<double>(k < sizes.size() ? sizes[k] : 1);
  for (double& value : curve) value /= static_cast<double>(runs.size());
  return curve;
}

std::vector<NodeId> sample_targets_by_depth(const Hierarchy& h,
                                            std::size_t per_depth,
                                            std::uint64_t seed) {
  std::vector<std::size_t> depth(h.size(), 0);
  std::vector<char> seen(h.size(), 0);
  std::vector<NodeId> queue(h.roots().begin(), h.roots().end());
  for (NodeId r : queue) seen[r] = 1;
  for (std::size_t i = 0; i < queue.size(); ++i)
    for (NodeId c : h.children(queue[i]))
      if (!seen[c]) {
        seen[c] = 1;
        depth[c] = depth[queue[i]] + 1;
        queue.push_back(c);
      }
  std::vector<std::vector<NodeId>> levels;
  for (NodeId v = 0; v < h.size(); ++v) {
    if (v == h.synthetic_root()) continue;
    if (depth[v] >= levels.size()) levels.resize(depth[v] + 1);
    levels[depth[v]].push_back(v);
  }
  Rng rng(seed);
  std::vector<NodeId> out;
  for (auto& level : levels) {
    const std::size_t take = std::min(per_depth, level.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.below(level.size() - i);
      std::swap(level[i], level[j]);
      out.push_back(level[i]);
    }
  }
  return out;
}

std::vector<ProbeResult> runtime_probe(const Hierarchy& h,
                                       const WeightMap& weights,
                                       std::span<const PolicyKind> kinds,
                                       std::size_t targets_per_depth,
                                       std::uint64_t seed,
                                       std::size_t repetitions) {
  using Clock = std::chrono::steady_clock;
  const auto targets = sample_targets_by_depth(h, targets_per_depth, seed);
  std::vector<ProbeResult> results;
  for (PolicyKind kind : kinds) {
    PolicyConfig config{kind};
    std::optional<CostMap> costs;
    if (kind == PolicyKind::greedy_cost_sensitive) costs = unit_costs(h.size());
    const auto ctx = make_context(h, weights, config, costs);
    std::vector<double> samples;
    for (std::size_t rep = 0; rep < std::max<std::size_t>(repetitions, 1); ++rep) {
      const auto start = Clock::now();
      for (NodeId target : targets) {
        const auto transcript = run_search(ctx, target);
        if (transcript.result != target)
          throw std::logic_error("runtime probe search returned a wrong target");
      }
      const std::chrono::duration<double> elapsed = Clock::now() - start;
      samples.push_back(elapsed.count() /
                        static_cast<double>(std::max<std::size_t>(targets.size(), 1)));
    }
    std::sort(samples.begin(), samples.end());
    results.push_back({kind, targets.size(), samples[samples.size() / 2]});
  }
  return results;
}

std::vector<NodeId> sample_stream(const WeightMap& weights, std::size_t count,
                                  std::uint64_t seed) {
  std::vector<double> cumulative(weights.size());
  double running = 0;
  for (std::size_t v = 0; v < weights.size(); ++v) {
    running += weights.p[v];
    cumulative[v] = running;
  }
  Rng rng(seed);
  std::vector<NodeId> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.uniform() * running;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    // Skip zero-mass nodes that share a cumulative value.
    auto v = static_cast<NodeId>(it - cumulative.begin());
    while (weights.p[v] == 0 && v + 1 < weights.size()) ++v;
    out.push_back(v);
  }
  return out;
}

namespace {

std::vector<std::string> numbered_labels(std::size_t n) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back("n" + std::to_string(i));
  return labels;
}

}  // namespace

Hierarchy random_tree(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(Errc::bad_parameter, "empty tree");
  Rng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(n - 1);
  for (NodeId v = 1; v < n; ++v)
    edges.emplace_back(static_cast<NodeId>(rng.below(v)), v);
  return Hierarchy(numbered_labels(n), std::move(edges));
}

Hierarchy random_dag(std::size_t n, std::size_t extra_edges,
                     std::uint64_t seed) {
  if (n == 0) throw Error(Errc::bad_parameter, "empty DAG");
  Rng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::set<std::pair<NodeId, NodeId>> seen;
  for (NodeId v = 1; v < n; ++v) {
    edges.emplace_back(static_cast<NodeId>(rng.below(v)), v);
    seen.insert(edges.back());
  }
  if (n >= 3) {
    for (std::size_t i = 0; i < extra_edges; ++i) {
      const auto child = static_cast<NodeId>(1 + rng.below(n - 1));
      const auto parent = static_cast<NodeId>(rng.below(child));
      if (seen.emplace(parent, child).second) edges.emplace_back(parent, child);
    }
  }
  return Hierarchy(numbered_labels(n), std::move(edges));
}

namespace {

std::string dot_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string to_dot(const DecisionTree& tree, const Hierarchy& h) {
  std::string out = "digraph decision_tree {\n";
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    const std::string id = "d" + std::to_string(i);
    if (node.leaf()) {
      out += "  " + id + " [shape=box, label=\"" + dot_escape(h.label(node.target)) +
             "\"];\n";
      continue;
    }
    out += "  " + id + " [label=\"" + dot_escape(h.label(node.query)) + "\"];\n";
    out += "  " + id + " -> d" + std::to_string(node.yes) + " [label=\"yes\"];\n";
    out += "  " + id + " -> d" + std::to_string(node.no) + " [label=\"no\"];\n";
  }
  out += "}\n";
  return out;
}

std::string css_to_csv(const std::vector<double>& curve) {
  std::string out = "questions,mean_candidates\n";
  char buf[64];
  for (std::size_t k = 0; k < curve.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", k, curve[k]);
    out += buf;
  }
  return out;
}

std::string probe_to_csv(const std::vector<ProbeResult>& results,
                         std::size_t n) {
  std::string out = "policy,n,searches,seconds_per_search\n";
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.9f\n", to_string(r.kind), n,
                  r.searches, r.seconds_per_search);
    out += buf;
  }
  return out;
}

}  // namespace igs
