#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "igs/hierarchy.hpp"

namespace igs {

/// Target probabilities p(v). When the source values were integers (counts,
/// scaled decimals, Zipf draws), `exact` keeps numerators proportional to p so
/// that rounding can be done without floating point.
struct WeightMap {
  std::vector<double> p;
  std::vector<std::uint64_t> exact;

  std::size_t size() const { return p.size(); }
  bool has_exact() const { return !exact.empty(); }
};

/// Integer weights w(u) = ceil(n^2 * p(u) / max_v p(v)).
struct RoundedWeightMap {
  std::vector<std::int64_t> w;
};

/// Query prices, all strictly positive.
struct CostMap {
  std::vector<double> c;
};

WeightMap normalize(std::span<const double> raw);
WeightMap normalize(std::span<const std::uint64_t> counts);

/// p = 1/n everywhere, except a synthetic root which gets 0.
WeightMap equal_weights(const Hierarchy& h);

RoundedWeightMap round_weights(const WeightMap& p, std::size_t n);

CostMap unit_costs(std::size_t n);

/// `node<TAB>weight` lines; unlisted nodes get 0. Plain decimals are parsed as
/// scaled integers so rounding stays exact.
WeightMap parse_weights(std::string_view text, const Hierarchy& h);
WeightMap load_weights_file(const std::string& path, const Hierarchy& h);

/// `node<TAB>price` lines; unlisted nodes cost 1.
CostMap parse_costs(std::string_view text, const Hierarchy& h);
CostMap load_costs_file(const std::string& path, const Hierarchy& h);

enum class DistributionKind { equal, uniform, exponential, zipf, file };

struct DistributionSpec {
  DistributionKind kind = DistributionKind::equal;
  double zipf_a = 2.0;
  std::uint64_t seed = 0;
  std::string path;
};

/// Parses "equal", "uniform", "exponential", "zipf" or "zipf:<a>".
DistributionSpec parse_distribution_spec(std::string_view text,
                                         std::uint64_t seed);
std::string to_string(const DistributionSpec& spec);

/// Random values x_v per node, normalized. The synthetic root, if any, is
/// assigned 0. Output depends only on the seed and n.
WeightMap generate(const DistributionSpec& spec, const Hierarchy& h);

/// mt19937_64 with platform-independent derived draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on the open interval (0, 1).
  double uniform();
  double exponential() { return -std::log(uniform()); }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
};

/// Draws k >= 1 with P(k) = k^-a / zeta(a), a > 1, by rejection
/// (Devroye, Non-Uniform Random Variate Generation, X.6).
class ZipfSampler {
 public:
  explicit ZipfSampler(double a);
  std::uint64_t operator()(Rng& rng) const;

 private:
  double a_;
  double b_;
};

/// Laplace-smoothed empirical distribution over node labels:
/// p(v) = (count(v) + 1) / (total + n). An excluded node (the synthetic root)
/// always has probability 0.
class OnlineLearner {
 public:
  OnlineLearner() = default;
  explicit OnlineLearner(std::size_t n, NodeId excluded = kNoNode);
  /// Restores a learner from its tallies.
  OnlineLearner(std::vector<std::uint64_t> counts, NodeId excluded);

  void observe(NodeId label);
  WeightMap current() const;

  std::uint64_t total() const { return total_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::size_t size() const { return counts_.size(); }

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
  NodeId excluded_ = kNoNode;
};

}  // namespace igs
