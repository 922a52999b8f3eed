#include "igs/hierarchy.hpp"

#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace igs {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::empty_input: return "EmptyInput";
    case Errc::parse_error: return "ParseError";
    case Errc::cycle_detected: return "CycleDetected";
    case Errc::node_not_live: return "NodeNotLive";
    case Errc::unknown_node: return "UnknownNode";
    case Errc::uninformative_query: return "UninformativeQuery";
    case Errc::all_zero: return "AllZero";
    case Errc::bad_parameter: return "BadParameter";
    case Errc::already_resolved: return "AlreadyResolved";
    case Errc::stale_question: return "StaleQuestion";
    case Errc::policy_mismatch: return "PolicyMismatch";
    case Errc::not_a_tree: return "NotATree";
    case Errc::leaf_mismatch: return "LeafMismatch";
    case Errc::too_large: return "TooLarge";
    case Errc::unknown_hierarchy: return "UnknownHierarchy";
    case Errc::unknown_session: return "UnknownSession";
    case Errc::session_closed: return "SessionClosed";
    case Errc::ordinal_mismatch: return "OrdinalMismatch";
    case Errc::io_error: return "IoError";
    case Errc::port_in_use: return "PortInUse";
    case Errc::bad_data_dir: return "BadDataDir";
  }
  return "Unknown";
}

namespace {

// Finds one cycle among nodes left over by Kahn's algorithm.
std::vector<NodeId> find_cycle(const std::vector<std::vector<NodeId>>& children,
                               const std::vector<std::size_t>& indegree) {
  const std::size_t n = children.size();
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> color(n, 0);
  std::vector<NodeId> parent(n, kNoNode);
  for (NodeId s = 0; s < n; ++s) {
    if (indegree[s] == 0 || color[s] != 0) continue;
    std::vector<std::pair<NodeId, std::size_t>> stack{{s, 0}};
    color[s] = 1;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next == children[u].size()) {
        color[u] = 2;
        stack.pop_back();
        continue;
      }
      const NodeId v = children[u][next++];
      if (indegree[v] == 0) continue;
      if (color[v] == 1) {
        std::vector<NodeId> cycle{v};
        for (NodeId w = u; w != v; w = parent[w]) cycle.push_back(w);
        std::reverse(cycle.begin() + 1, cycle.end());
        return cycle;
      }
      if (color[v] == 0) {
        color[v] = 1;
        parent[v] = u;
        stack.emplace_back(v, 0);
      }
    }
  }
  return {};
}

}  // namespace

Hierarchy::Hierarchy(std::vector<std::string> labels,
                     std::vector<std::pair<NodeId, NodeId>> edges,
                     NodeId synthetic_root)
    : labels_(std::move(labels)),
      edges_(std::move(edges)),
      synthetic_root_(synthetic_root) {
  const std::size_t n = labels_.size();
  index_.reserve(n);
  for (NodeId v = 0; v < n; ++v) index_.emplace(labels_[v], v);
  children_.resize(n);
  parents_.resize(n);
  for (const auto& [from, to] : edges_) {
    children_[from].push_back(to);
    parents_[to].push_back(from);
  }

  std::vector<std::size_t> indegree(n);
  for (NodeId v = 0; v < n; ++v) indegree[v] = parents_[v].size();
  for (NodeId v = 0; v < n; ++v)
    if (indegree[v] == 0) roots_.push_back(v);

  std::deque<NodeId> ready(roots_.begin(), roots_.end());
  topo_.reserve(n);
  while (!ready.empty()) {
    const NodeId u = ready.front();
    ready.pop_front();
    topo_.push_back(u);
    for (NodeId v : children_[u])
      if (--indegree[v] == 0) ready.push_back(v);
  }
  if (topo_.size() != n) {
    const auto cycle = find_cycle(children_, indegree);
    std::string msg = "cycle detected:";
    for (NodeId v : cycle) msg += " " + labels_[v] + " ->";
    if (!cycle.empty()) msg += " " + labels_[cycle.front()];
    throw Error(Errc::cycle_detected, msg);
  }
}

NodeId Hierarchy::root() const {
  if (roots_.size() != 1)
    throw Error(Errc::bad_parameter,
                "hierarchy has " + std::to_string(roots_.size()) + " roots");
  return roots_.front();
}

std::optional<NodeId> Hierarchy::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

NodeId Hierarchy::index(std::string_view label) const {
  if (auto v = find(label)) return *v;
  throw Error(Errc::unknown_node, "unknown node '" + std::string(label) + "'");
}

bool Hierarchy::is_tree() const {
  if (roots_.size() != 1 || edges_.size() + 1 != labels_.size()) return false;
  for (NodeId v = 0; v < labels_.size(); ++v)
    if (v != roots_.front() && parents_[v].size() != 1) return false;
  return true;
}

Hierarchy load_hierarchy(std::string_view text, LoadReport* report) {
  std::vector<std::string> labels;
  std::unordered_map<std::string, NodeId> index;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::set<std::pair<NodeId, NodeId>> seen;
  std::size_t duplicates = 0;

  auto intern = [&](std::string label) {
    auto [it, inserted] =
        index.emplace(label, static_cast<NodeId>(labels.size()));
    if (inserted) labels.push_back(std::move(label));
    return it->second;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      intern(std::string(line));
      continue;
    }
    std::string_view parent = line.substr(0, tab);
    std::string_view child = line.substr(tab + 1);
    if (parent.empty() || child.empty() ||
        std::find(child.begin(), child.end(), '\t') != child.end())
      throw Error(Errc::parse_error,
                  "line " + std::to_string(line_no) + ": expected parent<TAB>child");
    if (parent == child)
      throw Error(Errc::cycle_detected,
                  "cycle detected: self-loop on " + std::string(parent));
    const NodeId from = intern(std::string(parent));
    const NodeId to = intern(std::string(child));
    if (!seen.emplace(from, to).second) {
      ++duplicates;
      continue;
    }
    edges.emplace_back(from, to);
  }
  if (labels.empty()) throw Error(Errc::empty_input, "no nodes in input");
  if (report) report->duplicate_edges = duplicates;
  return Hierarchy(std::move(labels), std::move(edges));
}

Hierarchy load_hierarchy_file(const std::string& path, LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_hierarchy(buf.str(), report);
}

std::string serialize(const Hierarchy& h) {
  std::string out;
  std::vector<char> mentioned(h.size(), 0);
  for (const auto& [from, to] : h.edges()) {
    out += h.label(from);
    out += '\t';
    out += h.label(to);
    out += '\n';
    mentioned[from] = mentioned[to] = 1;
  }
  for (NodeId v = 0; v < h.size(); ++v)
    if (!mentioned[v]) out += h.label(v) + "\n";
  return out;
}

Hierarchy ensure_single_root(const Hierarchy& h, const std::string& root_label) {
  if (h.roots().size() == 1) return h;
  std::string label = root_label;
  while (h.find(label)) label += "_";
  auto labels = h.labels();
  auto edges = h.edges();
  const auto root = static_cast<NodeId>(labels.size());
  labels.push_back(label);
  for (NodeId r : h.roots()) edges.emplace_back(root, r);
  return Hierarchy(std::move(labels), std::move(edges), root);
}

HierarchyStats stats(const Hierarchy& h) {
  HierarchyStats s;
  s.n = h.size();
  s.m = h.edge_count();
  s.is_tree = h.is_tree();
  std::vector<std::size_t> depth(h.size(), 0);
  for (NodeId u : h.topo_order()) {
    s.max_out_degree = std::max(s.max_out_degree, h.children(u).size());
    for (NodeId v : h.children(u)) depth[v] = std::max(depth[v], depth[u] + 1);
    s.height = std::max(s.height, depth[u]);
  }
  return s;
}

CandidateView::CandidateView(const Hierarchy& h)
    : member_(h.size(), 1), live_count_(h.size()), root_(h.root()) {}

std::vector<NodeId> CandidateView::live_nodes() const {
  std::vector<NodeId> out;
  out.reserve(live_count_);
  for (NodeId v = 0; v < member_.size(); ++v)
    if (member_[v]) out.push_back(v);
  return out;
}

std::vector<NodeId> reachable_set(const Hierarchy& h, NodeId u,
                                  const CandidateView& view) {
  if (u >= h.size() || !view.is_live(u))
    throw Error(Errc::node_not_live, "node is not a live candidate");
  std::vector<char> visited(h.size(), 0);
  std::vector<NodeId> out{u};
  visited[u] = 1;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (NodeId c : h.children(out[i]))
      if (!visited[c] && view.is_live(c)) {
        visited[c] = 1;
        out.push_back(c);
      }
  return out;
}

template <typename Weight>
Weight reachable_set_weight(const Hierarchy& h, NodeId u,
                            std::span<const Weight> weights,
                            const CandidateView& view, std::size_t* count) {
  if (u >= h.size() || !view.is_live(u))
    throw Error(Errc::node_not_live, "node is not a live candidate");
  std::vector<char> visited(h.size(), 0);
  std::vector<NodeId> queue{u};
  visited[u] = 1;
  Weight total = weights[u];
  for (std::size_t i = 0; i < queue.size(); ++i)
    for (NodeId c : h.children(queue[i]))
      if (!visited[c] && view.is_live(c)) {
        visited[c] = 1;
        total += weights[c];
        queue.push_back(c);
      }
  if (count) *count = queue.size();
  return total;
}

template double reachable_set_weight<double>(const Hierarchy&, NodeId,
                                             std::span<const double>,
                                             const CandidateView&, std::size_t*);
template std::int64_t reachable_set_weight<std::int64_t>(
    const Hierarchy&, NodeId, std::span<const std::int64_t>,
    const CandidateView&, std::size_t*);

void apply_answer_in_place(CandidateView& view, const Hierarchy& h, NodeId q,
                           Answer answer) {
  if (q >= h.size() || !view.is_live(q))
    throw Error(Errc::node_not_live, "query node is not a live candidate");
  if (q == view.root_)
    throw Error(Errc::uninformative_query, "querying the candidate root");
  const auto reach = reachable_set(h, q, view);
  if (answer == Answer::yes) {
    std::vector<char> keep(h.size(), 0);
    for (NodeId v : reach) keep[v] = 1;
    for (NodeId v = 0; v < h.size(); ++v) view.member_[v] = keep[v] && view.member_[v];
    view.live_count_ = reach.size();
    view.root_ = q;
  } else {
    for (NodeId v : reach) view.member_[v] = 0;
    view.live_count_ -= reach.size();
  }
}

CandidateView apply_answer(const CandidateView& view, const Hierarchy& h,
                           NodeId q, Answer answer) {
  CandidateView next = view;
  apply_answer_in_place(next, h, q, answer);
  return next;
}

}  // namespace igs
