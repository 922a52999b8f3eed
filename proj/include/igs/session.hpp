#pragma once

#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "igs/distribution.hpp"
#include "igs/hierarchy.hpp"
#include "igs/policy.hpp"

namespace igs {

enum class SessionStatus { open, resolved, abandoned };
enum class DistributionMode { offline, online };

const char* to_string(SessionStatus status);
const char* to_string(DistributionMode mode);
DistributionMode parse_mode(std::string_view text);
Answer parse_answer(std::string_view text);
const char* to_string(Answer answer);

/// "Does the object belong under <label>?"
std::string question_text(const std::string& label);

struct SessionRecord {
  std::string id;
  std::string hierarchy_id;
  PolicyKind policy = PolicyKind::greedy_naive;
  DistributionMode mode = DistributionMode::offline;
  std::string object_ref;
  SessionStatus status = SessionStatus::open;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;
  /// Learner tallies the session was seeded from (online mode).
  std::vector<std::uint64_t> seed_counts;
  std::unique_ptr<Search> search;

  std::size_t pending_ordinal() const {
    return search->transcript().questions() + 1;
  }
};

struct HierarchyStatsView {
  std::vector<double> distribution;
  std::uint64_t total_labels = 0;
  std::size_t open = 0;
  std::size_t resolved = 0;
  std::size_t abandoned = 0;
  std::size_t window = 0;
  /// Mean question count over the last `window` resolved sessions; 0 if none.
  double rolling_mean_questions = 0;
};

/// Labeling sessions over uploaded hierarchies, persisted as an append-only
/// JSON-lines event log plus an optional snapshot in `data_dir`. All public
/// methods are thread-safe and serialized on one mutex.
class SessionService {
 public:
  struct Options {
    /// Empty means in-memory only.
    std::string data_dir;
    std::int64_t ttl_ms = 30 * 60 * 1000;
    std::size_t rolling_window = 10;
    /// Milliseconds since the epoch; defaults to the system clock.
    std::function<std::int64_t()> clock;
  };

  explicit SessionService(Options options);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Registers a hierarchy from edge-list text; `weights_text` (node<TAB>weight
  /// lines) sets the offline distribution, otherwise it is equal. Returns the
  /// id (generated when `id` is empty).
  std::string add_hierarchy(const std::string& edges_text,
                            const std::string& weights_text = "",
                            const std::string& id = "");

  nlohmann::json create_session(const std::string& hierarchy_id,
                                PolicyKind policy, DistributionMode mode,
                                const std::string& object_ref);
  nlohmann::json post_answer(const std::string& session_id,
                             std::size_t ordinal, Answer answer);
  nlohmann::json get_session(const std::string& session_id);
  HierarchyStatsView stats(const std::string& hierarchy_id);
  nlohmann::json stats_json(const std::string& hierarchy_id);
  nlohmann::json hierarchy_json(const std::string& hierarchy_id);

  /// Marks open sessions idle longer than the TTL as abandoned.
  std::size_t expire_idle();
  /// Writes a snapshot of the full state and truncates the event log.
  void checkpoint();

  std::size_t session_count();
  std::vector<std::string> hierarchy_ids();

 private:
  struct HierarchyEntry {
    std::string id;
    std::string edges_text;
    std::string weights_text;
    std::unique_ptr<Hierarchy> hierarchy;
    WeightMap offline;
    OnlineLearner learner;
    /// Offline contexts per policy, built on first use.
    std::map<PolicyKind, std::shared_ptr<const SearchContext>> contexts;
    std::deque<std::size_t> recent_questions;
  };

  HierarchyEntry& hierarchy_entry(const std::string& id);
  SessionRecord& session_entry(const std::string& id);
  std::shared_ptr<const SearchContext> context_for(
      HierarchyEntry& entry, PolicyKind policy, DistributionMode mode,
      const std::vector<std::uint64_t>& seed_counts);

  std::string do_add_hierarchy(const std::string& id, const std::string& edges,
                               const std::string& weights);
  SessionRecord& do_create(const std::string& id, const std::string& hierarchy_id,
                           PolicyKind policy, DistributionMode mode,
                           const std::string& object_ref, std::int64_t at,
                           std::vector<std::uint64_t> seed_counts);
  void do_answer(SessionRecord& s, Answer answer, std::int64_t at);
  void do_resolve(SessionRecord& s, std::int64_t at);
  void do_abandon(SessionRecord& s, std::int64_t at);

  nlohmann::json view(const SessionRecord& s) const;
  std::int64_t now() const;
  std::string fresh_id(char prefix);

  void append(nlohmann::json event);
  void replay();
  void apply_event(const nlohmann::json& event);
  nlohmann::json snapshot_json() const;
  void restore_snapshot(const nlohmann::json& snapshot);

  Options options_;
  std::mutex mu_;
  std::map<std::string, HierarchyEntry> hierarchies_;
  std::map<std::string, SessionRecord> sessions_;
  std::mt19937_64 id_rng_;
  std::uint64_t seq_ = 0;
  std::FILE* log_ = nullptr;
  bool replaying_ = false;
};

}  // namespace igs
