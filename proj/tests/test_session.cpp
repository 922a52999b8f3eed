#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "igs/http_server.hpp"
#include "igs/session.hpp"
#include "proc.hpp"
#include "support.hpp"

using namespace igs;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kRealWeights =
    "Vehicle\t4\nCar\t2\nMercedes\t2\nHonda\t4\nNissan\t8\nMaxima\t40\nSentra\t40\n";

struct FakeClock {
  std::shared_ptr<std::atomic<std::int64_t>> t = std::make_shared<std::atomic<std::int64_t>>(1000);
  std::function<std::int64_t()> fn() const {
    auto p = t;
    return [p] { return p->load(); };
  }
};

SessionService::Options memory_opts() { return {}; }

// Answers truthfully until the session closes.
json drive(SessionService& svc, json view, const Hierarchy& h, NodeId target) {
  const Oracle oracle(h, target);
  while (view["status"] == "open") {
    const NodeId q = h.index(view["question"]["node"].get<std::string>());
    view = svc.post_answer(view["session_id"], view["pending_ordinal"], oracle(q));
  }
  return view;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

}  // namespace

TEST_CASE("session first questions") {
  SessionService svc(memory_opts());
  const std::string real = svc.add_hierarchy(kVehicleEdges, kRealWeights, "real");
  const std::string eq = svc.add_hierarchy(kVehicleEdges);
  CHECK(real == "real");
  CHECK(eq.size() == 17);

  auto first = [&](const std::string& id, PolicyKind k) {
    return svc.create_session(id, k, DistributionMode::offline, "img")["question"]["node"];
  };
  CHECK(first(real, PolicyKind::greedy_tree) == "Maxima");
  CHECK(first(eq, PolicyKind::greedy_tree) == "Nissan");
  CHECK(first(eq, PolicyKind::greedy_naive) == "Nissan");
  CHECK(first(eq, PolicyKind::top_down) == "Car");
  const json v = svc.create_session(eq, PolicyKind::greedy_naive, DistributionMode::offline, "x");
  CHECK(v["question"]["text"] == "Does the object belong under Nissan?");
  CHECK(v["pending_ordinal"] == 1);
  CHECK(v["status"] == "open");
  CHECK(v["live_count"] == 7);
  CHECK(v["result"].is_null());

  CHECK(code_of([&] {
          svc.create_session("nope", PolicyKind::greedy_naive, DistributionMode::offline, "");
        }) == Errc::unknown_hierarchy);
  CHECK(code_of([&] { svc.get_session("s0"); }) == Errc::unknown_session);
  CHECK(code_of([&] { svc.add_hierarchy("a\tb\nb\ta\n"); }) == Errc::cycle_detected);
  CHECK(code_of([&] { svc.add_hierarchy(kVehicleEdges, "", "real"); }) == Errc::bad_parameter);
}

TEST_CASE("session answer flow") {
  SessionService svc(memory_opts());
  const std::string h = svc.add_hierarchy(kVehicleEdges);
  json v = svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::offline, "img-1");
  const std::string id = v["session_id"];

  v = svc.post_answer(id, 1, Answer::yes);
  CHECK(v["question"]["node"] == "Maxima");
  CHECK(v["live_count"] == 3);
  // Retrying the accepted answer changes nothing.
  const json again = svc.post_answer(id, 1, Answer::yes);
  CHECK(again == v);
  CHECK(code_of([&] { svc.post_answer(id, 1, Answer::no); }) == Errc::ordinal_mismatch);
  CHECK(code_of([&] { svc.post_answer(id, 5, Answer::no); }) == Errc::ordinal_mismatch);

  v = svc.post_answer(id, 2, Answer::no);
  CHECK(v["question"]["node"] == "Sentra");
  v = svc.post_answer(id, 3, Answer::yes);
  CHECK(v["status"] == "resolved");
  CHECK(v["result"] == "Sentra");
  CHECK(v["question"].is_null());
  REQUIRE(v["history"].size() == 3);
  CHECK(v["history"][0] == json{{"ordinal", 1}, {"node", "Nissan"}, {"answer", "yes"}});

  CHECK(svc.post_answer(id, 3, Answer::yes) == v);
  CHECK(code_of([&] { svc.post_answer(id, 4, Answer::yes); }) == Errc::session_closed);
  CHECK(svc.get_session(id) == v);

  const auto st = svc.stats(h);
  CHECK(st.resolved == 1);
  CHECK(st.total_labels == 1);
  CHECK(st.rolling_mean_questions == 3.0);
}

TEST_CASE("hierarchy stats") {
  SessionService::Options o;
  o.rolling_window = 3;
  SessionService svc(o);
  const Hierarchy vh = oracle::vehicle();
  const std::string h = svc.add_hierarchy(kVehicleEdges);

  const auto fresh = svc.stats(h);
  CHECK(fresh.total_labels == 0);
  for (double p : fresh.distribution) CHECK(p == doctest::Approx(1.0 / 7));
  CHECK(fresh.rolling_mean_questions == 0.0);

  // Question counts of the offline greedy strategy per target.
  const auto ctx = make_context(vh, equal_weights(vh), {PolicyKind::greedy_naive});
  const NodeId targets[] = {vh.index("Vehicle"), vh.index("Honda"), vh.index("Maxima"),
                            vh.index("Car")};
  std::vector<double> counts;
  for (NodeId t : targets) {
    drive(svc, svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::offline, ""), vh, t);
    counts.push_back(static_cast<double>(run_search(ctx, t).questions()));
  }
  const auto st = svc.stats(h);
  CHECK(st.rolling_mean_questions == doctest::Approx((counts[1] + counts[2] + counts[3]) / 3));
  CHECK(st.window == 3);

  for (int i = 0; i < 96; ++i)
    drive(svc, svc.create_session(h, PolicyKind::greedy_tree, DistributionMode::offline, ""), vh,
          vh.index("Maxima"));
  const auto after = svc.stats(h);
  CHECK(after.total_labels == 100);
  // Maxima: 97 labels; Laplace smoothing over 7 nodes.
  CHECK(after.distribution[vh.index("Maxima")] == doctest::Approx(98.0 / 107));
  CHECK(after.distribution[vh.index("Sentra")] == doctest::Approx(1.0 / 107));

  const json sj = svc.stats_json(h);
  CHECK(sj["labels_total"] == 100);
  CHECK(sj["sessions"]["resolved"] == 100);
  CHECK(sj["distribution"].size() == 7);
  const json hj = svc.hierarchy_json(h);
  CHECK(hj["n"] == 7);
  CHECK(hj["root"] == "Vehicle");
  CHECK(hj["is_tree"] == true);
}

TEST_CASE("online sessions learn from labels") {
  SessionService svc(memory_opts());
  const Hierarchy vh = oracle::vehicle();
  const std::string h = svc.add_hierarchy(kVehicleEdges);
  for (int i = 0; i < 100; ++i)
    drive(svc, svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::online, ""), vh,
          vh.index("Maxima"));
  CHECK(svc.stats(h).distribution[vh.index("Maxima")] == doctest::Approx(101.0 / 107));
  const json v = svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::online, "");
  CHECK(v["question"]["node"] == "Maxima");
  CHECK(v["mode"] == "online");
  // Offline sessions keep the equal prior.
  CHECK(svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::offline, "")
            ["question"]["node"] == "Nissan");
}

TEST_CASE("forest uploads get a synthetic root") {
  SessionService svc(memory_opts());
  const std::string h = svc.add_hierarchy("a\tb\nc\td\n");
  CHECK(svc.hierarchy_json(h)["n"] == 5);
  CHECK(svc.stats_json(h)["distribution"].size() == 4);
  const json v = svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::online, "");
  CHECK(v["status"] == "open");
}

TEST_CASE("idle sessions are abandoned") {
  FakeClock clock;
  SessionService::Options o;
  o.ttl_ms = 5000;
  o.clock = clock.fn();
  SessionService svc(o);
  const std::string h = svc.add_hierarchy(kVehicleEdges);
  const std::string a = svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::offline, "")["session_id"];
  const std::string b = svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::offline, "")["session_id"];
  *clock.t = 4000;
  svc.post_answer(b, 1, Answer::yes);
  *clock.t = 6001;
  CHECK(svc.expire_idle() == 1);
  CHECK(svc.get_session(a)["status"] == "abandoned");
  CHECK(svc.get_session(b)["status"] == "open");
  CHECK(code_of([&] { svc.post_answer(a, 1, Answer::yes); }) == Errc::session_closed);
  CHECK(svc.stats(h).abandoned == 1);
  *clock.t = 20000;
  CHECK(svc.expire_idle() == 1);
  CHECK(svc.expire_idle() == 0);
}

TEST_CASE("sessions survive a restart") {
  const std::string dir = proc::temp_dir("restart");
  const Hierarchy vh = oracle::vehicle();
  std::string h, open_id, done_id, online_id;
  json open_view, done_view;
  std::uint64_t labels = 0;
  SessionService::Options o;
  o.data_dir = dir;
  {
    SessionService svc(o);
    h = svc.add_hierarchy(kVehicleEdges, kRealWeights, "veh");
    done_view = drive(svc, svc.create_session(h, PolicyKind::greedy_tree, DistributionMode::offline, "a"),
                      vh, vh.index("Honda"));
    done_id = done_view["session_id"];
    open_view = svc.create_session(h, PolicyKind::greedy_dag, DistributionMode::offline, "b");
    open_id = open_view["session_id"];
    open_view = svc.post_answer(open_id, 1, Answer::no);
    online_id = svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::online, "c")["session_id"];
  }
  {
    SessionService svc(o);
    CHECK(svc.get_session(open_id) == open_view);
    CHECK(svc.get_session(done_id) == done_view);
    CHECK(svc.stats(h).total_labels == 1);
    // The online session keeps the distribution it was seeded with.
    const json online = svc.get_session(online_id);
    drive(svc, svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::online, ""), vh,
          vh.index("Mercedes"));
    svc.checkpoint();
    CHECK(fs::file_size(fs::path(dir) / "events.jsonl") == 0);
    CHECK(fs::exists(fs::path(dir) / "snapshot.json"));
    open_view = svc.post_answer(open_id, 2, Answer::yes);
    CHECK(svc.get_session(online_id) == online);
    labels = svc.stats(h).total_labels;
  }
  {
    SessionService svc(o);
    CHECK(svc.get_session(open_id) == open_view);
    CHECK(svc.stats(h).total_labels == labels);
    CHECK(svc.session_count() == 4);
  }
  fs::remove_all(fs::path(dir).parent_path());
}

TEST_CASE("a torn final log line is discarded") {
  const std::string dir = proc::temp_dir("torn");
  SessionService::Options o;
  o.data_dir = dir;
  std::string id;
  json before;
  {
    SessionService svc(o);
    const std::string h = svc.add_hierarchy(kVehicleEdges);
    id = svc.create_session(h, PolicyKind::greedy_naive, DistributionMode::offline, "")["session_id"];
    before = svc.get_session(id);
  }
  const fs::path log = fs::path(dir) / "events.jsonl";
  const auto size = fs::file_size(log);
  {
    std::ofstream out(log, std::ios::app | std::ios::binary);
    out << R"({"type":"answer","session":")" << id << R"(","ordi)";
  }
  {
    SessionService svc(o);
    CHECK(svc.get_session(id) == before);
    CHECK(fs::file_size(log) == size);
    svc.post_answer(id, 1, Answer::yes);
  }
  {
    SessionService svc(o);
    CHECK(svc.get_session(id)["questions_asked"] == 1);
  }
  fs::remove_all(fs::path(dir).parent_path());
}

TEST_CASE("unusable data directory") {
  const std::string dir = proc::temp_dir("file");
  fs::create_directories(fs::path(dir).parent_path());
  std::ofstream(dir) << "x";
  SessionService::Options o;
  o.data_dir = dir;
  CHECK(code_of([&] { SessionService svc(o); }) == Errc::bad_data_dir);
  fs::remove_all(fs::path(dir).parent_path());
}

TEST_CASE("http api") {
  SessionService svc(memory_opts());
  ServerOptions so;
  so.host = "127.0.0.1";
  so.port = 0;
  HttpServer server(svc, so);
  const int port = server.bind();
  std::thread runner([&] { server.run(); });
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

  auto up = cli.Post("/hierarchies", json{{"edges", kVehicleEdges}, {"id", "veh"}}.dump(),
                     "application/json");
  REQUIRE(up);
  CHECK(up->status == 201);
  CHECK(json::parse(up->body)["n"] == 7);
  auto raw = cli.Post("/hierarchies", "x\ty\n", "text/plain");
  REQUIRE(raw);
  CHECK(raw->status == 201);
  auto bad = cli.Post("/hierarchies", "a\tb\nb\ta\n", "text/plain");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["code"] == "CycleDetected");

  auto meta = cli.Get("/hierarchies/veh");
  REQUIRE(meta);
  CHECK(json::parse(meta->body)["height"] == 3);

  auto created = cli.Post("/sessions",
                          json{{"hierarchy_id", "veh"}, {"policy", "greedy_naive"},
                               {"mode", "offline"}, {"object_ref", "img"}}.dump(),
                          "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const json s = json::parse(created->body);
  const std::string sid = s["session_id"];
  CHECK(s["question"]["node"] == "Nissan");

  auto answer = [&](int ordinal, const char* a) {
    return cli.Post("/sessions/" + sid + "/answers",
                    json{{"ordinal", ordinal}, {"answer", a}}.dump(), "application/json");
  };
  auto r1 = answer(1, "yes");
  REQUIRE(r1);
  CHECK(r1->status == 200);
  auto conflict = answer(3, "no");
  REQUIRE(conflict);
  CHECK(conflict->status == 409);
  CHECK(json::parse(conflict->body)["code"] == "OrdinalMismatch");
  answer(2, "no");
  auto last = answer(3, "yes");
  REQUIRE(last);
  CHECK(json::parse(last->body)["result"] == "Sentra");
  auto closed = answer(4, "yes");
  REQUIRE(closed);
  CHECK(closed->status == 409);
  auto badanswer = answer(4, "maybe");
  REQUIRE(badanswer);
  CHECK(badanswer->status == 400);

  auto got = cli.Get("/sessions/" + sid);
  REQUIRE(got);
  CHECK(json::parse(got->body)["status"] == "resolved");
  auto stats = cli.Get("/hierarchies/veh/stats");
  REQUIRE(stats);
  CHECK(json::parse(stats->body)["labels_total"] == 1);

  auto missing = cli.Get("/sessions/nope");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["code"] == "UnknownSession");
  auto nohier = cli.Get("/hierarchies/nope/stats");
  REQUIRE(nohier);
  CHECK(nohier->status == 404);
  auto malformed = cli.Post("/sessions", "{", "application/json");
  REQUIRE(malformed);
  CHECK(malformed->status == 400);

  auto pre = cli.Options("/sessions");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  // A second server on the same port fails to bind.
  ServerOptions taken = so;
  taken.port = port;
  HttpServer other(svc, taken);
  CHECK(code_of([&] { other.bind(); }) == Errc::port_in_use);

  server.stop();
  runner.join();
}

TEST_CASE("serve exits non-zero on a busy port") {
  httplib::Server holder;
  const int port = holder.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { holder.listen_after_bind(); });
  holder.wait_until_ready();
  proc::Child c = proc::spawn({"serve", "--host", "127.0.0.1", "--port", std::to_string(port)}, false);
  const int status = proc::wait_for(c, std::chrono::seconds(10));
  CHECK(status != 0);
  holder.stop();
  listener.join();
}

TEST_CASE("serve restores the pending question after SIGTERM") {
  const std::string dir = proc::temp_dir("serve");
  proc::Child c = proc::spawn({"serve", "--host", "127.0.0.1", "--port", "0", "--data-dir", dir});
  REQUIRE(c.port > 0);
  std::string sid;
  json before;
  {
    httplib::Client cli("127.0.0.1", c.port);
    REQUIRE(cli.Post("/hierarchies", json{{"edges", kVehicleEdges}, {"id", "veh"}}.dump(),
                     "application/json"));
    auto created = cli.Post("/sessions", json{{"hierarchy_id", "veh"}}.dump(), "application/json");
    REQUIRE(created);
    sid = json::parse(created->body)["session_id"];
    auto r = cli.Post("/sessions/" + sid + "/answers", json{{"ordinal", 1}, {"answer", "no"}}.dump(),
                      "application/json");
    REQUIRE(r);
    before = json::parse(r->body);
  }
  CHECK(proc::stop(c, SIGTERM) == 0);
  CHECK(fs::exists(fs::path(dir) / "snapshot.json"));

  proc::Child again = proc::spawn({"serve", "--host", "127.0.0.1", "--port", "0", "--data-dir", dir});
  REQUIRE(again.port > 0);
  {
    httplib::Client cli("127.0.0.1", again.port);
    auto got = cli.Get("/sessions/" + sid);
    REQUIRE(got);
    CHECK(json::parse(got->body) == before);
  }
  proc::stop(again, SIGTERM);
  fs::remove_all(fs::path(dir).parent_path());
}
