#pragma once

// Brute-force reference implementations used as test oracles. They share no
// code with the library beyond the Hierarchy adjacency lists.

#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "igs/evaluation.hpp"
#include "igs/hierarchy.hpp"
#include "igs/policy.hpp"

namespace oracle {

using igs::Hierarchy;
using igs::NodeId;

inline Hierarchy vehicle() { return igs::load_hierarchy(igs::kVehicleEdges); }

inline Hierarchy chain(int k) {
  std::string text;
  for (int i = 1; i < k; ++i)
    text += std::to_string(i) + "\t" + std::to_string(i + 1) + "\n";
  return igs::load_hierarchy(text);
}

inline Hierarchy diamond() {
  return igs::load_hierarchy("r\ta\nr\tb\na\tc\nb\tc\n");
}

/// Recursive DFS over nodes with live[v] set.
inline std::set<NodeId> reach(const Hierarchy& h, NodeId u,
                              const std::vector<char>& live) {
  std::set<NodeId> out;
  std::function<void(NodeId)> visit = [&](NodeId v) {
    if (!live[v] || out.count(v)) return;
    out.insert(v);
    for (NodeId c : h.children(v)) visit(c);
  };
  visit(u);
  return out;
}

inline std::set<NodeId> reach(const Hierarchy& h, NodeId u) {
  return reach(h, u, std::vector<char>(h.size(), 1));
}

template <typename W>
W mass(const std::set<NodeId>& s, const std::vector<W>& w) {
  W sum = 0;
  for (NodeId v : s) sum += w[v];
  return sum;
}

/// Live set after replaying answers from scratch.
struct Replay {
  std::vector<char> live;
  NodeId root;
};

inline Replay replay(const Hierarchy& h, const igs::Transcript& t) {
  Replay r{std::vector<char>(h.size(), 1), h.root()};
  for (const auto& step : t.steps) {
    const auto s = reach(h, step.question.node, r.live);
    if (step.answer == igs::Answer::yes) {
      for (NodeId v = 0; v < h.size(); ++v) r.live[v] = r.live[v] && s.count(v);
      r.root = step.question.node;
    } else {
      for (NodeId v : s) r.live[v] = 0;
    }
  }
  return r;
}

/// Smallest |2 w(G_v) - w(G)| over live non-root nodes.
template <typename W>
long double min_balance(const Hierarchy& h, const std::vector<char>& live,
                        NodeId root, const std::vector<W>& w) {
  W total = 0;
  for (NodeId v = 0; v < h.size(); ++v)
    if (live[v]) total += w[v];
  long double best = -1;
  for (NodeId v = 0; v < h.size(); ++v) {
    if (!live[v] || v == root) continue;
    const long double b =
        std::fabs(2.0L * static_cast<long double>(mass(reach(h, v, live), w)) -
                  static_cast<long double>(total));
    if (best < 0 || b < best) best = b;
  }
  return best;
}

/// Exhaustive minimum expected cost over all strategies by plain recursion on
/// live-flag vectors (no bitmask tricks). Exponential; keep n small.
inline double brute_optimum(const Hierarchy& h, const std::vector<double>& p,
                            const std::vector<double>& c,
                            const std::vector<char>& live) {
  std::size_t count = 0;
  double total = 0;
  for (NodeId v = 0; v < h.size(); ++v)
    if (live[v]) {
      ++count;
      total += p[v];
    }
  if (count <= 1) return 0.0;
  double best = -1;
  for (NodeId q = 0; q < h.size(); ++q) {
    if (!live[q]) continue;
    const auto s = reach(h, q, live);
    if (s.size() == count) continue;
    std::vector<char> yes(h.size(), 0), no = live;
    for (NodeId v : s) {
      yes[v] = 1;
      no[v] = 0;
    }
    const double value =
        c[q] * total + brute_optimum(h, p, c, yes) + brute_optimum(h, p, c, no);
    if (best < 0 || value < best) best = value;
  }
  return best;
}

}  // namespace oracle
