#include "igs/session.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace igs {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::open: return "open";
    case SessionStatus::resolved: return "resolved";
    case SessionStatus::abandoned: return "abandoned";
  }
  return "?";
}

const char* to_string(DistributionMode mode) {
  return mode == DistributionMode::online ? "online" : "offline";
}

DistributionMode parse_mode(std::string_view text) {
  if (text == "offline") return DistributionMode::offline;
  if (text == "online") return DistributionMode::online;
  throw Error(Errc::bad_parameter, "mode must be offline or online");
}

Answer parse_answer(std::string_view text) {
  if (text == "yes") return Answer::yes;
  if (text == "no") return Answer::no;
  throw Error(Errc::bad_parameter, "answer must be yes or no");
}

const char* to_string(Answer answer) {
  return answer == Answer::yes ? "yes" : "no";
}

std::string question_text(const std::string& label) {
  return "Does the object belong under " + label + "?";
}

namespace {

SessionStatus parse_status(std::string_view text) {
  if (text == "resolved") return SessionStatus::resolved;
  if (text == "abandoned") return SessionStatus::abandoned;
  return SessionStatus::open;
}

const char* kSnapshot = "snapshot.json";
const char* kEvents = "events.jsonl";

}  // namespace

SessionService::SessionService(Options options)
    : options_(std::move(options)), id_rng_(std::random_device{}()) {
  replay();
}

SessionService::~SessionService() {
  if (log_) std::fclose(log_);
}

std::int64_t SessionService::now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string SessionService::fresh_id(char prefix) {
  static const char* hex = "0123456789abcdef";
  for (;;) {
    std::uint64_t bits = id_rng_();
    std::string id(1, prefix);
    for (int i = 0; i < 16; ++i, bits >>= 4) id += hex[bits & 15];
    if (!hierarchies_.count(id) && !sessions_.count(id)) return id;
  }
}

void SessionService::append(json event) {
  event["seq"] = ++seq_;
  if (!log_ || replaying_) return;
  const std::string line = event.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() ||
      std::fflush(log_) != 0)
    throw Error(Errc::io_error, "cannot append to the event log");
}

SessionService::HierarchyEntry& SessionService::hierarchy_entry(
    const std::string& id) {
  auto it = hierarchies_.find(id);
  if (it == hierarchies_.end())
    throw Error(Errc::unknown_hierarchy, "unknown hierarchy '" + id + "'");
  return it->second;
}

SessionRecord& SessionService::session_entry(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end())
    throw Error(Errc::unknown_session, "unknown session '" + id + "'");
  return it->second;
}

std::shared_ptr<const SearchContext> SessionService::context_for(
    HierarchyEntry& entry, PolicyKind policy, DistributionMode mode,
    const std::vector<std::uint64_t>& seed_counts) {
  const Hierarchy& h = *entry.hierarchy;
  std::optional<CostMap> costs;
  if (policy == PolicyKind::greedy_cost_sensitive) costs = unit_costs(h.size());
  if (mode == DistributionMode::online) {
    const OnlineLearner snapshot(seed_counts, h.synthetic_root());
    return make_context(h, snapshot.current(), {policy}, std::move(costs));
  }
  auto& slot = entry.contexts[policy];
  if (!slot) slot = make_context(h, entry.offline, {policy}, std::move(costs));
  return slot;
}

std::string SessionService::do_add_hierarchy(const std::string& id,
                                             const std::string& edges,
                                             const std::string& weights) {
  if (hierarchies_.count(id))
    throw Error(Errc::bad_parameter, "hierarchy '" + id + "' already exists");
  HierarchyEntry entry;
  entry.id = id;
  entry.edges_text = edges;
  entry.weights_text = weights;
  entry.hierarchy =
      std::make_unique<Hierarchy>(ensure_single_root(load_hierarchy(edges)));
  const Hierarchy& h = *entry.hierarchy;
  entry.offline = weights.empty() ? equal_weights(h) : parse_weights(weights, h);
  entry.learner = OnlineLearner(h.size(), h.synthetic_root());
  hierarchies_.emplace(id, std::move(entry));
  return id;
}

std::string SessionService::add_hierarchy(const std::string& edges_text,
                                          const std::string& weights_text,
                                          const std::string& id) {
  std::lock_guard lock(mu_);
  const std::string key = id.empty() ? fresh_id('h') : id;
  do_add_hierarchy(key, edges_text, weights_text);
  append({{"type", "hierarchy"},
          {"id", key},
          {"edges", edges_text},
          {"weights", weights_text}});
  return key;
}

SessionRecord& SessionService::do_create(const std::string& id,
                                         const std::string& hierarchy_id,
                                         PolicyKind policy, DistributionMode mode,
                                         const std::string& object_ref,
                                         std::int64_t at,
                                         std::vector<std::uint64_t> seed_counts) {
  auto& entry = hierarchy_entry(hierarchy_id);
  SessionRecord s;
  s.id = id;
  s.hierarchy_id = hierarchy_id;
  s.policy = policy;
  s.mode = mode;
  s.object_ref = object_ref;
  s.created_at = s.updated_at = at;
  s.seed_counts = std::move(seed_counts);
  s.search = std::make_unique<Search>(context_for(entry, policy, mode, s.seed_counts));
  if (s.search->resolved())
    s.status = SessionStatus::resolved;
  else
    s.search->ask();
  return sessions_.emplace(id, std::move(s)).first->second;
}

json SessionService::create_session(const std::string& hierarchy_id,
                                    PolicyKind policy, DistributionMode mode,
                                    const std::string& object_ref) {
  std::lock_guard lock(mu_);
  auto& entry = hierarchy_entry(hierarchy_id);
  std::vector<std::uint64_t> seed;
  if (mode == DistributionMode::online) seed = entry.learner.counts();
  const std::string id = fresh_id('s');
  const std::int64_t at = now();
  auto& s = do_create(id, hierarchy_id, policy, mode, object_ref, at, seed);
  json event = {{"type", "session"},   {"id", id},
                {"hierarchy", hierarchy_id}, {"policy", to_string(policy)},
                {"mode", to_string(mode)},   {"object", object_ref},
                {"at", at}};
  if (mode == DistributionMode::online) event["counts"] = seed;
  append(std::move(event));
  return view(s);
}

void SessionService::do_answer(SessionRecord& s, Answer answer, std::int64_t at) {
  s.search->ask();
  s.search->answer(answer);
  if (!s.search->resolved()) s.search->ask();
  s.updated_at = at;
}

void SessionService::do_resolve(SessionRecord& s, std::int64_t at) {
  auto& entry = hierarchy_entry(s.hierarchy_id);
  s.status = SessionStatus::resolved;
  s.updated_at = at;
  entry.learner.observe(s.search->result());
  entry.recent_questions.push_back(s.search->transcript().questions());
  while (entry.recent_questions.size() > std::max<std::size_t>(options_.rolling_window, 1))
    entry.recent_questions.pop_front();
}

void SessionService::do_abandon(SessionRecord& s, std::int64_t at) {
  s.status = SessionStatus::abandoned;
  s.updated_at = at;
}

json SessionService::post_answer(const std::string& session_id,
                                 std::size_t ordinal, Answer answer) {
  std::lock_guard lock(mu_);
  auto& s = session_entry(session_id);
  const auto& steps = s.search->transcript().steps;
  // A retry of the last accepted answer gets the same response.
  if (!steps.empty() && ordinal == steps.size() && steps.back().answer == answer &&
      s.status != SessionStatus::abandoned)
    return view(s);
  if (s.status != SessionStatus::open)
    throw Error(Errc::session_closed,
                "session is " + std::string(to_string(s.status)));
  if (ordinal != s.pending_ordinal())
    throw Error(Errc::ordinal_mismatch,
                "pending question is " + std::to_string(s.pending_ordinal()) +
                    ", got " + std::to_string(ordinal));
  const std::int64_t at = now();
  do_answer(s, answer, at);
  append({{"type", "answer"},
          {"session", s.id},
          {"ordinal", ordinal},
          {"answer", to_string(answer)},
          {"at", at}});
  if (s.search->resolved()) {
    do_resolve(s, at);
    const auto& h = *hierarchy_entry(s.hierarchy_id).hierarchy;
    append({{"type", "label"},
            {"session", s.id},
            {"hierarchy", s.hierarchy_id},
            {"result", h.label(s.search->result())},
            {"at", at}});
  }
  return view(s);
}

json SessionService::get_session(const std::string& session_id) {
  std::lock_guard lock(mu_);
  return view(session_entry(session_id));
}

json SessionService::view(const SessionRecord& s) const {
  const Hierarchy& h = *hierarchies_.at(s.hierarchy_id).hierarchy;
  json j;
  j["session_id"] = s.id;
  j["hierarchy_id"] = s.hierarchy_id;
  j["policy"] = to_string(s.policy);
  j["mode"] = to_string(s.mode);
  j["object_ref"] = s.object_ref;
  j["status"] = to_string(s.status);
  j["created_at"] = s.created_at;
  j["updated_at"] = s.updated_at;
  j["live_count"] = s.search->live_count();
  j["questions_asked"] = s.search->transcript().questions();
  json history = json::array();
  for (const auto& step : s.search->transcript().steps)
    history.push_back({{"ordinal", step.question.ordinal},
                       {"node", h.label(step.question.node)},
                       {"answer", to_string(step.answer)}});
  j["history"] = std::move(history);
  if (s.status == SessionStatus::open) {
    const Question& q = s.search->ask();
    j["pending_ordinal"] = q.ordinal;
    j["question"] = {{"ordinal", q.ordinal},
                     {"node", h.label(q.node)},
                     {"text", question_text(h.label(q.node))}};
  } else {
    j["pending_ordinal"] = nullptr;
    j["question"] = nullptr;
  }
  if (s.search->resolved())
    j["result"] = h.label(s.search->result());
  else
    j["result"] = nullptr;
  return j;
}

HierarchyStatsView SessionService::stats(const std::string& hierarchy_id) {
  std::lock_guard lock(mu_);
  auto& entry = hierarchy_entry(hierarchy_id);
  HierarchyStatsView out;
  out.distribution = entry.learner.current().p;
  out.total_labels = entry.learner.total();
  out.window = std::max<std::size_t>(options_.rolling_window, 1);
  for (const auto& [id, s] : sessions_) {
    if (s.hierarchy_id != hierarchy_id) continue;
    switch (s.status) {
      case SessionStatus::open: ++out.open; break;
      case SessionStatus::resolved: ++out.resolved; break;
      case SessionStatus::abandoned: ++out.abandoned; break;
    }
  }
  if (!entry.recent_questions.empty()) {
    double sum = 0;
    for (std::size_t q : entry.recent_questions) sum += static_cast<double>(q);
    out.rolling_mean_questions = sum / static_cast<double>(entry.recent_questions.size());
  }
  return out;
}

json SessionService::stats_json(const std::string& hierarchy_id) {
  const HierarchyStatsView s = stats(hierarchy_id);
  std::lock_guard lock(mu_);
  const Hierarchy& h = *hierarchy_entry(hierarchy_id).hierarchy;
  json dist = json::array();
  for (NodeId v = 0; v < h.size(); ++v)
    if (v != h.synthetic_root())
      dist.push_back({{"node", h.label(v)}, {"p", s.distribution[v]}});
  return {{"hierarchy_id", hierarchy_id},
          {"labels_total", s.total_labels},
          {"sessions",
           {{"open", s.open}, {"resolved", s.resolved}, {"abandoned", s.abandoned}}},
          {"rolling_window", s.window},
          {"rolling_mean_questions", s.rolling_mean_questions},
          {"distribution", std::move(dist)}};
}

json SessionService::hierarchy_json(const std::string& hierarchy_id) {
  std::lock_guard lock(mu_);
  const Hierarchy& h = *hierarchy_entry(hierarchy_id).hierarchy;
  const HierarchyStats st = igs::stats(h);
  return {{"hierarchy_id", hierarchy_id},
          {"n", st.n},
          {"m", st.m},
          {"height", st.height},
          {"max_out_degree", st.max_out_degree},
          {"is_tree", st.is_tree},
          {"root", h.label(h.root())}};
}

std::size_t SessionService::expire_idle() {
  std::lock_guard lock(mu_);
  const std::int64_t at = now();
  std::size_t count = 0;
  for (auto& [id, s] : sessions_) {
    if (s.status != SessionStatus::open || at - s.updated_at <= options_.ttl_ms)
      continue;
    do_abandon(s, at);
    append({{"type", "abandon"}, {"session", id}, {"at", at}});
    ++count;
  }
  return count;
}

std::size_t SessionService::session_count() {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::vector<std::string> SessionService::hierarchy_ids() {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, entry] : hierarchies_) out.push_back(id);
  return out;
}

void SessionService::apply_event(const json& e) {
  const std::string type = e.at("type");
  if (type == "hierarchy") {
    do_add_hierarchy(e.at("id"), e.at("edges"), e.at("weights"));
  } else if (type == "session") {
    std::vector<std::uint64_t> counts;
    if (e.contains("counts")) counts = e.at("counts").get<std::vector<std::uint64_t>>();
    do_create(e.at("id"), e.at("hierarchy"), parse_policy(e.at("policy").get<std::string>()),
              parse_mode(e.at("mode").get<std::string>()), e.at("object"),
              e.at("at"), std::move(counts));
  } else if (type == "answer") {
    auto& s = session_entry(e.at("session"));
    if (e.at("ordinal").get<std::size_t>() != s.pending_ordinal())
      throw Error(Errc::io_error, "event log out of order for " + s.id);
    do_answer(s, parse_answer(e.at("answer").get<std::string>()), e.at("at"));
  } else if (type == "label") {
    do_resolve(session_entry(e.at("session")), e.at("at"));
  } else if (type == "abandon") {
    do_abandon(session_entry(e.at("session")), e.at("at"));
  } else {
    throw Error(Errc::io_error, "unknown event type '" + type + "'");
  }
}

json SessionService::snapshot_json() const {
  json hs = json::array();
  for (const auto& [id, entry] : hierarchies_)
    hs.push_back({{"id", id},
                  {"edges", entry.edges_text},
                  {"weights", entry.weights_text},
                  {"counts", entry.learner.counts()},
                  {"recent", std::vector<std::size_t>(entry.recent_questions.begin(),
                                                      entry.recent_questions.end())}});
  json ss = json::array();
  for (const auto& [id, s] : sessions_) {
    std::string answers;
    for (const auto& step : s.search->transcript().steps)
      answers += step.answer == Answer::yes ? 'y' : 'n';
    json j = {{"id", id},
              {"hierarchy", s.hierarchy_id},
              {"policy", to_string(s.policy)},
              {"mode", to_string(s.mode)},
              {"object", s.object_ref},
              {"status", to_string(s.status)},
              {"created", s.created_at},
              {"updated", s.updated_at},
              {"answers", answers}};
    if (s.mode == DistributionMode::online) j["counts"] = s.seed_counts;
    ss.push_back(std::move(j));
  }
  return {{"seq", seq_}, {"hierarchies", hs}, {"sessions", ss}};
}

void SessionService::restore_snapshot(const json& snap) {
  seq_ = snap.at("seq");
  for (const auto& e : snap.at("hierarchies")) {
    do_add_hierarchy(e.at("id"), e.at("edges"), e.at("weights"));
    auto& entry = hierarchies_.at(e.at("id"));
    entry.learner = OnlineLearner(e.at("counts").get<std::vector<std::uint64_t>>(),
                                  entry.hierarchy->synthetic_root());
    for (std::size_t q : e.at("recent")) entry.recent_questions.push_back(q);
  }
  for (const auto& e : snap.at("sessions")) {
    std::vector<std::uint64_t> counts;
    if (e.contains("counts")) counts = e.at("counts").get<std::vector<std::uint64_t>>();
    auto& s = do_create(e.at("id"), e.at("hierarchy"),
                        parse_policy(e.at("policy").get<std::string>()),
                        parse_mode(e.at("mode").get<std::string>()), e.at("object"),
                        e.at("created"), std::move(counts));
    for (char a : e.at("answers").get<std::string>())
      do_answer(s, a == 'y' ? Answer::yes : Answer::no, e.at("updated"));
    s.status = parse_status(e.at("status").get<std::string>());
    s.updated_at = e.at("updated");
  }
}

void SessionService::replay() {
  if (options_.data_dir.empty()) return;
  const fs::path dir(options_.data_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw Error(Errc::bad_data_dir, "cannot use data directory " + dir.string());

  replaying_ = true;
  if (fs::exists(dir / kSnapshot)) {
    std::ifstream in(dir / kSnapshot);
    restore_snapshot(json::parse(in));
  }
  const std::uint64_t snapshot_seq = seq_;

  // A torn final line (crash mid-write) is dropped and cut from the file.
  std::uintmax_t valid_bytes = 0;
  if (fs::exists(dir / kEvents)) {
    std::ifstream in(dir / kEvents, std::ios::binary);
    std::string line;
    std::uintmax_t offset = 0;
    while (std::getline(in, line)) {
      const bool complete = !in.eof();
      offset += line.size() + (complete ? 1 : 0);
      if (line.empty()) {
        valid_bytes = offset;
        continue;
      }
      json event = json::parse(line, nullptr, false);
      if (event.is_discarded() || !complete) break;
      valid_bytes = offset;
      const std::uint64_t seq = event.value("seq", std::uint64_t{0});
      if (seq <= snapshot_seq) continue;
      apply_event(event);
      seq_ = seq;
    }
    in.close();
    if (fs::file_size(dir / kEvents) != valid_bytes)
      fs::resize_file(dir / kEvents, valid_bytes);
  }
  replaying_ = false;

  log_ = std::fopen((dir / kEvents).string().c_str(), "ab");
  if (!log_) throw Error(Errc::bad_data_dir, "cannot open the event log");

  // Sessions whose final answer was logged without its label event.
  for (auto& [id, s] : sessions_) {
    if (s.status != SessionStatus::open || !s.search->resolved()) continue;
    do_resolve(s, s.updated_at);
    append({{"type", "label"},
            {"session", id},
            {"hierarchy", s.hierarchy_id},
            {"result", hierarchies_.at(s.hierarchy_id).hierarchy->label(s.search->result())},
            {"at", s.updated_at}});
  }
}

void SessionService::checkpoint() {
  std::lock_guard lock(mu_);
  if (options_.data_dir.empty()) return;
  const fs::path dir(options_.data_dir);
  const fs::path tmp = dir / "snapshot.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << snapshot_json().dump();
    if (!out.flush()) throw Error(Errc::io_error, "cannot write snapshot");
  }
  fs::rename(tmp, dir / kSnapshot);
  if (log_) std::fclose(log_);
  log_ = std::fopen((dir / kEvents).string().c_str(), "wb");
  if (!log_) throw Error(Errc::io_error, "cannot reset the event log");
}

}  // namespace igs
