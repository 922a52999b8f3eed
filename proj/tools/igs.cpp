// igs: command-line driver for hierarchy validation, simulation, evaluation,
// benchmarking and the labeling service.

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "igs/evaluation.hpp"
#include "igs/http_server.hpp"
#include "igs/session.hpp"

namespace {

using namespace igs;

constexpr int kExitInvalid = 1;
constexpr int kExitUsage = 2;

struct Inputs {
  std::string hierarchy;
  std::string weights;
  std::string dist;
  std::string costs;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_inputs(CLI::App* cmd, Inputs& in, bool need_weights) {
  cmd->add_option("hierarchy", in.hierarchy, "edge-list file (parent<TAB>child)")
      ->required();
  if (!need_weights) return;
  auto* w = cmd->add_option("--weights", in.weights, "node<TAB>weight file");
  auto* d = cmd->add_option("--dist", in.dist,
                            "equal | uniform | exponential | zipf[:a]");
  w->excludes(d);
  cmd->add_option("--costs", in.costs, "node<TAB>price file");
  cmd->add_option("--seed", in.seed, "seed for synthetic distributions")
      ->each([&in](const std::string&) { in.seed_given = true; });
}

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

Hierarchy read_hierarchy(const std::string& path) {
  LoadReport report;
  Hierarchy h = load_hierarchy_file(path, &report);
  if (report.duplicate_edges > 0)
    std::cerr << "warning: skipped " << report.duplicate_edges
              << " duplicate edge(s)\n";
  return ensure_single_root(h);
}

WeightMap read_weights(const Inputs& in, const Hierarchy& h,
                       const std::string& dist_override = "") {
  if (!in.weights.empty()) return load_weights_file(in.weights, h);
  const std::string text = dist_override.empty() ? in.dist : dist_override;
  if (text.empty() || text == "equal") return equal_weights(h);
  if (!in.seed_given) throw UsageError("--seed is required for --dist " + text);
  return generate(parse_distribution_spec(text, in.seed), h);
}

std::optional<CostMap> read_costs(const Inputs& in, const Hierarchy& h,
                                  PolicyKind kind) {
  if (!in.costs.empty()) return load_costs_file(in.costs, h);
  if (kind == PolicyKind::greedy_cost_sensitive) return unit_costs(h.size());
  return std::nullopt;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error(Errc::io_error, "cannot write " + path);
    }
  }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// Prints CSV rows either verbatim or as space-aligned columns.
void emit(std::ostream& out, const std::vector<std::vector<std::string>>& rows,
          bool pretty) {
  if (!pretty) {
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
    return;
  }
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i >= width.size()) width.push_back(0);
      width[i] = std::max(width[i], row[i].size());
    }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += row[i];
      if (i + 1 < row.size()) line += std::string(width[i] - row[i].size() + 2, ' ');
    }
    out << line << "\n";
  }
}

int cmd_validate(const std::string& path) {
  LoadReport report;
  const Hierarchy h = load_hierarchy_file(path, &report);
  if (report.duplicate_edges > 0)
    std::cerr << "warning: skipped " << report.duplicate_edges
              << " duplicate edge(s)\n";
  const HierarchyStats s = stats(h);
  std::cout << "n=" << s.n << " m=" << s.m << " height=" << s.height
            << " maxdeg=" << s.max_out_degree << " tree=" << (s.is_tree ? "yes" : "no")
            << "\n";
  if (h.roots().size() != 1) {
    std::cerr << "error: hierarchy has " << h.roots().size() << " roots\n";
    return kExitInvalid;
  }
  return 0;
}

int cmd_stats(const std::string& path, bool pretty) {
  const Hierarchy h = load_hierarchy_file(path);
  const HierarchyStats s = stats(h);
  emit(std::cout,
       {{"n", "m", "height", "max_out_degree", "is_tree", "roots"},
        {std::to_string(s.n), std::to_string(s.m), std::to_string(s.height),
         std::to_string(s.max_out_degree), s.is_tree ? "true" : "false",
         std::to_string(h.roots().size())}},
       pretty);
  return 0;
}

int cmd_golden(std::ostream& out, bool pretty) {
  const VehicleGolden g = vehicle_golden();
  const Hierarchy& h = g.hierarchy;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"strategy"};
  for (NodeId v = 0; v < h.size(); ++v) header.push_back(h.label(v));
  header.push_back("total");
  rows.push_back(header);
  for (std::size_t i = 0; i < g.strategies.size(); ++i) {
    const auto depths = depth_by_target(build_priority_tree(h, g.strategies[i]), h.size());
    std::vector<std::string> row{"strategy" + std::to_string(i + 1)};
    std::uint64_t total = 0;
    for (NodeId v = 0; v < h.size(); ++v) {
      row.push_back(std::to_string(depths[v]));
      total += depths[v] * g.objects[v];
    }
    row.push_back(std::to_string(total));
    rows.push_back(row);
  }
  emit(out, rows, pretty);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive graph search over category hierarchies"};
  app.require_subcommand(1);

  // validate / stats
  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a hierarchy file");
  validate->add_option("hierarchy", validate_path)->required();

  std::string stats_path;
  bool stats_pretty = false;
  auto* stats_cmd = app.add_subcommand("stats", "hierarchy statistics as CSV");
  stats_cmd->add_option("hierarchy", stats_path)->required();
  stats_cmd->add_flag("--pretty", stats_pretty);

  // simulate
  Inputs sim;
  std::string sim_policy = "greedy_naive", sim_golden, sim_out;
  bool sim_pretty = false, sim_rounded = false, sim_online = false;
  std::size_t sim_stream = 0, sim_window = 10000;
  auto* simulate = app.add_subcommand("simulate", "run searches against a simulated oracle");
  simulate->add_option("hierarchy", sim.hierarchy, "edge-list file");
  {
    auto* w = simulate->add_option("--weights", sim.weights, "node<TAB>weight file");
    auto* d = simulate->add_option("--dist", sim.dist,
                                   "equal | uniform | exponential | zipf[:a]");
    w->excludes(d);
    simulate->add_option("--costs", sim.costs, "node<TAB>price file");
    simulate->add_option("--seed", sim.seed)->each(
        [&sim](const std::string&) { sim.seed_given = true; });
  }
  simulate->add_option("--policy", sim_policy);
  simulate->add_flag("--rounded", sim_rounded, "score splits on rounded weights");
  simulate->add_option("--stream", sim_stream,
                       "sample this many objects from the distribution");
  simulate->add_flag("--online", sim_online, "learn the distribution from the stream");
  simulate->add_option("--window", sim_window, "objects per reported window");
  simulate->add_option("--golden", sim_golden, "replay a built-in golden case")
      ->check(CLI::IsMember({"example2"}));
  simulate->add_option("-o,--output", sim_out);
  simulate->add_flag("--pretty", sim_pretty);

  // evaluate
  Inputs ev;
  std::vector<std::string> ev_policies, ev_dists{"equal", "uniform", "exponential", "zipf:2"};
  bool ev_optimal = false, ev_pretty = false;
  std::string ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "expected cost per policy and distribution");
  add_inputs(evaluate, ev, false);
  evaluate->add_option("--costs", ev.costs, "node<TAB>price file");
  evaluate->add_option("--policies", ev_policies)->delimiter(',');
  evaluate->add_option("--dists", ev_dists)->delimiter(',');
  evaluate->add_option("--seed", ev.seed)->each(
      [&ev](const std::string&) { ev.seed_given = true; });
  evaluate->add_flag("--optimal", ev_optimal, "include the exact optimum (n <= 16)");
  evaluate->add_option("-o,--output", ev_out);
  evaluate->add_flag("--pretty", ev_pretty);

  // css
  Inputs css;
  std::string css_policy = "greedy_naive", css_out;
  auto* css_cmd = app.add_subcommand("css", "mean candidate-set size per question");
  add_inputs(css_cmd, css, true);
  css_cmd->add_option("--policy", css_policy);
  css_cmd->add_option("-o,--output", css_out);

  // bench
  std::string bench_hierarchy, bench_out, bench_dist = "equal";
  std::size_t bench_tree = 0, bench_dag = 0, bench_extra = 0, bench_per_depth = 5,
              bench_reps = 5;
  std::uint64_t bench_seed = 1;
  std::vector<std::string> bench_policies{"greedy_naive", "greedy_tree", "greedy_dag"};
  auto* bench = app.add_subcommand("bench", "time complete searches per policy");
  auto* bh = bench->add_option("--hierarchy", bench_hierarchy);
  auto* bt = bench->add_option("--random-tree", bench_tree, "generate a random tree of n nodes");
  auto* bd = bench->add_option("--random-dag", bench_dag, "generate a random DAG of n nodes");
  bh->excludes(bt)->excludes(bd);
  bt->excludes(bd);
  bench->add_option("--extra-edges", bench_extra, "extra DAG edges (default n/2)");
  bench->add_option("--dist", bench_dist);
  bench->add_option("--policies", bench_policies)->delimiter(',');
  bench->add_option("--per-depth", bench_per_depth, "targets sampled per depth level");
  bench->add_option("--repetitions", bench_reps);
  bench->add_option("--seed", bench_seed);
  bench->add_option("-o,--output", bench_out);

  // export-dtree
  Inputs ex;
  std::string ex_policy = "greedy_naive", ex_out;
  bool ex_rounded = false;
  auto* export_cmd = app.add_subcommand("export-dtree", "write the strategy tree as DOT");
  add_inputs(export_cmd, ex, true);
  export_cmd->add_option("--policy", ex_policy);
  export_cmd->add_flag("--rounded", ex_rounded);
  export_cmd->add_option("-o,--output", ex_out);

  // serve
  ServerOptions server_opts;
  SessionService::Options service_opts;
  double ttl_seconds = 1800;
  std::string serve_hierarchy, serve_weights, serve_id = "default";
  auto* serve = app.add_subcommand("serve", "run the labeling service");
  serve->add_option("--host", server_opts.host)->envname("IGS_HOST");
  serve->add_option("--port", server_opts.port)->envname("IGS_PORT");
  serve->add_option("--data-dir", service_opts.data_dir)->envname("IGS_DATA_DIR");
  serve->add_option("--ttl", ttl_seconds, "idle seconds before a session is abandoned")
      ->envname("IGS_SESSION_TTL");
  serve->add_option("--window", service_opts.rolling_window,
                    "resolved sessions in the rolling mean")
      ->envname("IGS_ROLLING_WINDOW");
  serve->add_option("--static-dir", server_opts.static_dir, "serve files at /");
  serve->add_option("--hierarchy", serve_hierarchy, "preload an edge-list file");
  serve->add_option("--hierarchy-weights", serve_weights, "weights for the preloaded file");
  serve->add_option("--hierarchy-id", serve_id);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*validate) return cmd_validate(validate_path);
    if (*stats_cmd) return cmd_stats(stats_path, stats_pretty);

    if (*simulate) {
      Output out(sim_out);
      if (!sim_golden.empty()) return cmd_golden(out.out(), sim_pretty);
      if (sim.hierarchy.empty()) throw UsageError("a hierarchy file is required");
      const Hierarchy h = read_hierarchy(sim.hierarchy);
      const WeightMap weights = read_weights(sim, h);
      const PolicyConfig config{parse_policy(sim_policy), sim_rounded};
      const auto costs = read_costs(sim, h, config.kind);
      if (sim_stream > 0) {
        if (!sim.seed_given) throw UsageError("--seed is required with --stream");
        const auto stream = sample_stream(weights, sim_stream, sim.seed);
        BatchOptions options{config, std::nullopt, costs, sim_window};
        if (!sim_online) options.offline = weights;
        const EvalReport report = batch_evaluate(h, stream, options);
        std::vector<std::vector<std::string>> rows{{"window", "objects", "mean_cost"}};
        for (std::size_t i = 0; i < report.window_means.size(); ++i) {
          const std::size_t objects =
              std::min(sim_window, report.objects - i * sim_window);
          rows.push_back({std::to_string(i), std::to_string(objects),
                          fmt(report.window_means[i])});
        }
        rows.push_back({"all", std::to_string(report.objects), fmt(report.mean_cost)});
        emit(out.out(), rows, sim_pretty);
        return 0;
      }
      const auto ctx = make_context(h, weights, config, costs);
      std::vector<std::vector<std::string>> rows{{"target", "p", "questions", "price"}};
      double mean_q = 0, mean_price = 0;
      for (NodeId t = 0; t < h.size(); ++t) {
        if (t == h.synthetic_root()) continue;
        const Transcript tr = run_search(ctx, t);
        mean_q += weights.p[t] * static_cast<double>(tr.questions());
        mean_price += weights.p[t] * tr.total_price;
        rows.push_back({h.label(t), fmt(weights.p[t]), std::to_string(tr.questions()),
                        fmt(tr.total_price)});
      }
      rows.push_back({"*", fmt(1.0), fmt(mean_q), fmt(mean_price)});
      emit(out.out(), rows, sim_pretty);
      return 0;
    }

    if (*evaluate) {
      Output out(ev_out);
      const Hierarchy h = read_hierarchy(ev.hierarchy);
      std::vector<PolicyKind> kinds;
      if (ev_policies.empty()) {
        for (PolicyKind k : kAllPolicies)
          if (k != PolicyKind::greedy_tree || h.is_tree()) kinds.push_back(k);
      } else {
        for (const auto& p : ev_policies) kinds.push_back(parse_policy(p));
      }
      std::vector<std::string> header{"policy", "distribution", "expected_cost"};
      if (ev_optimal) header.push_back("optimal");
      std::vector<std::vector<std::string>> rows{header};
      for (const auto& dist : ev_dists) {
        const WeightMap weights = read_weights(ev, h, dist);
        std::optional<CostMap> file_costs;
        if (!ev.costs.empty()) file_costs = load_costs_file(ev.costs, h);
        std::string optimum;
        if (ev_optimal)
          optimum = fmt(optimal_expected_cost(h, weights, file_costs ? &*file_costs : nullptr));
        for (PolicyKind k : kinds) {
          const auto costs = read_costs(ev, h, k);
          const auto tree = build_decision_tree(make_context(h, weights, {k}, costs));
          const double cost = file_costs ? expected_cost_sensitive(tree, weights, *file_costs)
                                         : expected_cost(tree, weights);
          std::vector<std::string> row{to_string(k), dist, fmt(cost)};
          if (ev_optimal) row.push_back(optimum);
          rows.push_back(row);
        }
      }
      emit(out.out(), rows, ev_pretty);
      return 0;
    }

    if (*css_cmd) {
      Output out(css_out);
      const Hierarchy h = read_hierarchy(css.hierarchy);
      const WeightMap weights = read_weights(css, h);
      const PolicyKind kind = parse_policy(css_policy);
      out.out() << css_to_csv(css_curve(make_context(h, weights, {kind}, read_costs(css, h, kind))));
      return 0;
    }

    if (*bench) {
      Output out(bench_out);
      std::optional<Hierarchy> h;
      if (!bench_hierarchy.empty())
        h = read_hierarchy(bench_hierarchy);
      else if (bench_tree > 0)
        h = random_tree(bench_tree, bench_seed);
      else if (bench_dag > 0)
        h = random_dag(bench_dag, bench_extra ? bench_extra : bench_dag / 2, bench_seed);
      else
        throw UsageError("one of --hierarchy, --random-tree, --random-dag is required");
      const WeightMap weights =
          bench_dist == "equal"
              ? equal_weights(*h)
              : generate(parse_distribution_spec(bench_dist, bench_seed), *h);
      std::vector<PolicyKind> kinds;
      for (const auto& p : bench_policies) {
        const PolicyKind k = parse_policy(p);
        if (k == PolicyKind::greedy_tree && !h->is_tree()) continue;
        kinds.push_back(k);
      }
      out.out() << probe_to_csv(
          runtime_probe(*h, weights, kinds, bench_per_depth, bench_seed, bench_reps),
          h->size());
      return 0;
    }

    if (*export_cmd) {
      Output out(ex_out);
      const Hierarchy h = read_hierarchy(ex.hierarchy);
      const WeightMap weights = read_weights(ex, h);
      const PolicyConfig config{parse_policy(ex_policy), ex_rounded};
      out.out() << to_dot(
          build_decision_tree(make_context(h, weights, config, read_costs(ex, h, config.kind))), h);
      return 0;
    }

    if (*serve) {
      service_opts.ttl_ms = static_cast<std::int64_t>(ttl_seconds * 1000);
      SessionService service(service_opts);
      if (!serve_hierarchy.empty()) {
        const auto ids = service.hierarchy_ids();
        if (std::find(ids.begin(), ids.end(), serve_id) == ids.end()) {
          std::ifstream ein(serve_hierarchy, std::ios::binary);
          if (!ein) throw Error(Errc::io_error, "cannot open " + serve_hierarchy);
          std::stringstream edges, wts;
          edges << ein.rdbuf();
          if (!serve_weights.empty()) {
            std::ifstream win(serve_weights, std::ios::binary);
            if (!win) throw Error(Errc::io_error, "cannot open " + serve_weights);
            wts << win.rdbuf();
          }
          service.add_hierarchy(edges.str(), wts.str(), serve_id);
        }
      }
      HttpServer server(service, server_opts);
      const int port = server.bind();
      // Termination signals are taken by a watcher thread, not a handler.
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGTERM);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGUSR1);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);
      std::thread watcher([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
      });
      std::cout << "listening on " << server_opts.host << ":" << port << std::endl;
      server.run();
      pthread_kill(watcher.native_handle(), SIGUSR1);
      watcher.join();
      service.checkpoint();
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return e.code() == Errc::bad_parameter || e.code() == Errc::policy_mismatch
               ? kExitUsage
               : kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return 0;
}
