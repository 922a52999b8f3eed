#include <doctest.h>

#include "igs/evaluation.hpp"
#include "support.hpp"

using namespace igs;

namespace {

std::vector<char> all_live(const Hierarchy& h) { return std::vector<char>(h.size(), 1); }

std::set<NodeId> to_set(const std::vector<NodeId>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("load the vehicle tree") {
  const Hierarchy h = oracle::vehicle();
  CHECK(h.size() == 7);
  CHECK(h.edge_count() == 6);
  CHECK(h.label(h.root()) == "Vehicle");
  const auto car = h.index("Car");
  REQUIRE(h.children(car).size() == 3);
  CHECK(h.label(h.children(car)[0]) == "Mercedes");
  CHECK(h.label(h.children(car)[1]) == "Honda");
  CHECK(h.label(h.children(car)[2]) == "Nissan");
  CHECK(h.is_tree());
}

TEST_CASE("load minimal and malformed inputs") {
  const Hierarchy h = load_hierarchy("a\tb\n");
  CHECK(h.size() == 2);
  CHECK(h.label(h.root()) == "a");

  try {
    load_hierarchy("a\tb\nb\tc\nc\ta\n");
    FAIL("expected a cycle");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::cycle_detected);
    const std::string msg = e.what();
    CHECK(msg.find("a -> b") != std::string::npos);
    CHECK(msg.find("c -> a") != std::string::npos);
  }
  CHECK_THROWS_AS(load_hierarchy("x\tx\n"), Error);
  try {
    load_hierarchy("# only a comment\n\n");
    FAIL("expected empty input");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_input);
  }
  try {
    load_hierarchy("a\tb\tc\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse_error);
  }
}

TEST_CASE("comments, CRLF and duplicate edges") {
  LoadReport report;
  const Hierarchy h = load_hierarchy("# header\r\nr\ta\r\nr\ta\nr\tb\n", &report);
  CHECK(h.size() == 3);
  CHECK(h.edge_count() == 2);
  CHECK(report.duplicate_edges == 1);
}

TEST_CASE("ensure_single_root") {
  const Hierarchy v = oracle::vehicle();
  const Hierarchy same = ensure_single_root(v);
  CHECK(same.size() == 7);
  CHECK(same.label(same.root()) == "Vehicle");
  CHECK(same.synthetic_root() == kNoNode);

  const Hierarchy forest = ensure_single_root(load_hierarchy("a\tb\nc\td\n"));
  CHECK(forest.size() == 5);
  const NodeId r = forest.root();
  CHECK(r == forest.synthetic_root());
  REQUIRE(forest.children(r).size() == 2);
  CHECK(forest.label(forest.children(r)[0]) == "a");
  CHECK(forest.label(forest.children(r)[1]) == "c");

  const Hierarchy singles = ensure_single_root(load_hierarchy("a\nb\n"));
  CHECK(singles.size() == 3);
  CHECK(singles.children(singles.root()).size() == 2);

  // The synthetic label avoids collisions.
  const Hierarchy clash = ensure_single_root(load_hierarchy("__root__\nb\n"));
  CHECK(clash.label(clash.root()) == "__root___");
}

TEST_CASE("reachable_set") {
  const Hierarchy h = oracle::vehicle();
  const CandidateView view(h);
  CHECK(to_set(reachable_set(h, h.index("Nissan"), view)) ==
        std::set<NodeId>{h.index("Nissan"), h.index("Maxima"), h.index("Sentra")});
  CHECK(reachable_set(h, h.index("Honda"), view).size() == 1);
  CHECK(reachable_set(h, h.root(), view).size() == 7);

  const CandidateView after = apply_answer(view, h, h.index("Nissan"), Answer::no);
  try {
    reachable_set(h, h.index("Maxima"), after);
    FAIL("expected NodeNotLive");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::node_not_live);
  }
}

TEST_CASE("reachable_set_weight") {
  const Hierarchy h = oracle::vehicle();
  const WeightMap w = equal_weights(h);
  const CandidateView view(h);
  std::size_t count = 0;
  CHECK(reachable_set_weight<double>(h, h.index("Nissan"), w.p, view, &count) ==
        doctest::Approx(3.0 / 7).epsilon(1e-12));
  CHECK(count == 3);
  CHECK(reachable_set_weight<double>(h, h.root(), w.p, view, nullptr) ==
        doctest::Approx(1.0).epsilon(1e-12));

  const Hierarchy d = oracle::diamond();
  const WeightMap dw = equal_weights(d);
  CHECK(reachable_set_weight<double>(d, d.root(), dw.p, CandidateView(d), &count) ==
        doctest::Approx(1.0));
  CHECK(count == 4);
}

TEST_CASE("apply_answer") {
  const Hierarchy h = oracle::vehicle();
  const CandidateView view(h);
  const NodeId nissan = h.index("Nissan");

  const CandidateView yes = apply_answer(view, h, nissan, Answer::yes);
  CHECK(yes.live_count() == 3);
  CHECK(yes.root() == nissan);
  CHECK(to_set(yes.live_nodes()) ==
        std::set<NodeId>{nissan, h.index("Maxima"), h.index("Sentra")});

  const CandidateView no = apply_answer(view, h, nissan, Answer::no);
  CHECK(no.live_count() == 4);
  CHECK(no.root() == h.root());
  CHECK(to_set(no.live_nodes()) == std::set<NodeId>{h.index("Vehicle"), h.index("Car"),
                                                    h.index("Mercedes"), h.index("Honda")});
  try {
    apply_answer(view, h, h.root(), Answer::yes);
    FAIL("expected UninformativeQuery");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::uninformative_query);
  }
  try {
    apply_answer(no, h, h.index("Sentra"), Answer::yes);
    FAIL("expected NodeNotLive");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::node_not_live);
  }
}

TEST_CASE("stats") {
  const HierarchyStats v = stats(oracle::vehicle());
  CHECK(v.n == 7);
  CHECK(v.m == 6);
  CHECK(v.height == 3);
  CHECK(v.max_out_degree == 3);
  CHECK(v.is_tree);

  const HierarchyStats one = stats(load_hierarchy("solo\n"));
  CHECK(one.n == 1);
  CHECK(one.m == 0);
  CHECK(one.height == 0);
  CHECK(one.max_out_degree == 0);
  CHECK(one.is_tree);

  const HierarchyStats d = stats(oracle::diamond());
  CHECK(d.n == 4);
  CHECK(d.m == 4);
  CHECK(d.height == 2);
  CHECK(d.max_out_degree == 2);
  CHECK_FALSE(d.is_tree);
}

TEST_CASE("property: reach contains u and is transitive") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Hierarchy h = random_dag(20 + seed * 9, seed * 7, seed);
    const CandidateView view(h);
    std::vector<std::set<NodeId>> r(h.size());
    for (NodeId u = 0; u < h.size(); ++u) {
      r[u] = to_set(reachable_set(h, u, view));
      CHECK(r[u].count(u) == 1);
      CHECK(r[u] == oracle::reach(h, u));
    }
    for (NodeId u = 0; u < h.size(); ++u)
      for (NodeId v : r[u])
        for (NodeId w : r[v]) REQUIRE(r[u].count(w) == 1);
  }
}

TEST_CASE("property: yes and no branches partition the live set") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Hierarchy h = random_dag(40, 20, seed);
    CandidateView view(h);
    Rng rng(seed);
    // Walk a random answer path, checking the split at each step.
    while (view.live_count() > 1) {
      const auto live = view.live_nodes();
      NodeId q;
      do q = live[rng.below(live.size())];
      while (q == view.root());
      const CandidateView yes = apply_answer(view, h, q, Answer::yes);
      const CandidateView no = apply_answer(view, h, q, Answer::no);
      CHECK(yes.live_count() + no.live_count() == view.live_count());
      CHECK(yes.live_count() < view.live_count());
      CHECK(no.live_count() < view.live_count());
      for (NodeId v : live) CHECK((yes.is_live(v) != no.is_live(v)));
      view = rng.below(2) ? yes : no;
    }
  }
}

TEST_CASE("property: reachable_set_weight equals the brute-force sum") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Hierarchy h = random_dag(10 + seed * 4, seed * 3, seed + 100);
    const WeightMap w = generate({DistributionKind::uniform, 2.0, seed, ""}, h);
    CandidateView view(h);
    if (h.size() > 3) view = apply_answer(view, h, 3, Answer::no);
    std::vector<char> live(h.size());
    for (NodeId v = 0; v < h.size(); ++v) live[v] = view.is_live(v);
    for (NodeId u = 0; u < h.size(); ++u) {
      if (!view.is_live(u)) continue;
      CHECK(reachable_set_weight<double>(h, u, w.p, view, nullptr) ==
            doctest::Approx(oracle::mass(oracle::reach(h, u, live), w.p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: serialize round trip") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Hierarchy h = random_dag(50, 30, seed);
    const Hierarchy back = load_hierarchy(serialize(h));
    std::multiset<std::pair<std::string, std::string>> a, b;
    for (const auto& [x, y] : h.edges()) a.emplace(h.label(x), h.label(y));
    for (const auto& [x, y] : back.edges()) b.emplace(back.label(x), back.label(y));
    CHECK(a == b);
    CHECK(back.size() == h.size());
  }
  const Hierarchy iso = load_hierarchy("a\tb\nlonely\n");
  CHECK(load_hierarchy(serialize(iso)).size() == 3);
}
