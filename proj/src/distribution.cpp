#include "igs/distribution.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace igs {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct WeightLine {
  NodeId node;
  std::string_view value;
  std::size_t line_no;
};

std::vector<WeightLine> split_weight_lines(std::string_view text,
                                           const Hierarchy& h) {
  std::vector<WeightLine> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos)
      throw Error(Errc::parse_error,
                  "line " + std::to_string(line_no) + ": expected node<TAB>value");
    out.push_back({h.index(line.substr(0, tab)), line.substr(tab + 1), line_no});
  }
  return out;
}

double parse_double(std::string_view text, std::size_t line_no) {
  double value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw Error(Errc::parse_error, "line " + std::to_string(line_no) +
                                       ": bad number '" + std::string(text) + "'");
  return value;
}

// Splits "123.4500" into ("123", "45"); nullopt for anything else.
std::optional<std::pair<std::string_view, std::string_view>> split_decimal(
    std::string_view text) {
  const auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac =
      dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  auto digits = [](std::string_view s) {
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return c >= '0' && c <= '9'; });
  };
  if ((whole.empty() && frac.empty()) || !digits(whole) || !digits(frac))
    return std::nullopt;
  while (!frac.empty() && frac.back() == '0') frac.remove_suffix(1);
  return std::make_pair(whole, frac);
}

}  // namespace

WeightMap normalize(std::span<const double> raw) {
  long double total = 0;
  for (double x : raw) {
    if (!(x >= 0) || !std::isfinite(x))
      throw Error(Errc::bad_parameter, "weights must be finite and nonnegative");
    total += x;
  }
  if (total <= 0) throw Error(Errc::all_zero, "all weights are zero");
  WeightMap out;
  out.p.reserve(raw.size());
  for (double x : raw) out.p.push_back(static_cast<double>(x / total));
  return out;
}

WeightMap normalize(std::span<const std::uint64_t> counts) {
  long double total = 0;
  for (auto x : counts) total += static_cast<long double>(x);
  if (total <= 0) throw Error(Errc::all_zero, "all weights are zero");
  WeightMap out;
  out.exact.assign(counts.begin(), counts.end());
  out.p.reserve(counts.size());
  for (auto x : counts)
    out.p.push_back(static_cast<double>(static_cast<long double>(x) / total));
  return out;
}

WeightMap equal_weights(const Hierarchy& h) {
  std::vector<std::uint64_t> ones(h.size(), 1);
  if (h.synthetic_root() != kNoNode && h.size() > 1) ones[h.synthetic_root()] = 0;
  return normalize(std::span<const std::uint64_t>(ones));
}

RoundedWeightMap round_weights(const WeightMap& p, std::size_t n) {
  RoundedWeightMap out;
  out.w.resize(p.size(), 0);
  if (p.size() == 0) return out;
  const auto n2 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n);

  if (p.has_exact()) {
    const std::uint64_t max_x = *std::max_element(p.exact.begin(), p.exact.end());
    if (max_x == 0) throw Error(Errc::all_zero, "all weights are zero");
    for (std::size_t v = 0; v < p.size(); ++v) {
      const unsigned __int128 num =
          static_cast<unsigned __int128>(n2) * p.exact[v];
      out.w[v] = static_cast<std::int64_t>((num + max_x - 1) / max_x);
    }
    return out;
  }

  const double max_p = *std::max_element(p.p.begin(), p.p.end());
  if (!(max_p > 0)) throw Error(Errc::all_zero, "all weights are zero");
  constexpr double kSlack = 4 * std::numeric_limits<double>::epsilon();
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p.p[v] <= 0) continue;
    const double scaled = static_cast<double>(n2) * (p.p[v] / max_p);
    const double floor = std::floor(scaled);
    // A value a few ulps above an integer is that integer.
    const double w = (scaled - floor <= kSlack * scaled) ? floor : floor + 1;
    out.w[v] = std::clamp<std::int64_t>(static_cast<std::int64_t>(w), 1, n2);
  }
  return out;
}

CostMap unit_costs(std::size_t n) { return CostMap{std::vector<double>(n, 1.0)}; }

WeightMap parse_weights(std::string_view text, const Hierarchy& h) {
  const auto lines = split_weight_lines(text, h);
  if (lines.empty()) throw Error(Errc::empty_input, "no weights in input");

  std::vector<std::pair<std::string_view, std::string_view>> decimals;
  bool exact = true;
  std::size_t scale = 0;
  for (const auto& line : lines) {
    auto d = split_decimal(line.value);
    if (!d || d->first.size() + d->second.size() > 18) {
      exact = false;
      break;
    }
    scale = std::max(scale, d->second.size());
    decimals.push_back(*d);
  }
  exact = exact && scale <= 18;

  if (exact) {
    std::vector<std::uint64_t> numer(h.size(), 0);
    unsigned __int128 total = 0;
    for (std::size_t i = 0; i < lines.size() && exact; ++i) {
      const auto& [whole, frac] = decimals[i];
      unsigned __int128 value = 0;
      for (char c : whole) value = value * 10 + static_cast<unsigned>(c - '0');
      for (char c : frac) value = value * 10 + static_cast<unsigned>(c - '0');
      for (std::size_t k = frac.size(); k < scale; ++k) value *= 10;
      value += numer[lines[i].node];
      if (value > std::numeric_limits<std::uint64_t>::max()) {
        exact = false;
        break;
      }
      numer[lines[i].node] = static_cast<std::uint64_t>(value);
      total += value;
    }
    if (exact && total <= std::numeric_limits<std::uint64_t>::max())
      return normalize(std::span<const std::uint64_t>(numer));
  }

  std::vector<double> raw(h.size(), 0.0);
  for (const auto& line : lines) {
    const double x = parse_double(line.value, line.line_no);
    if (x < 0)
      throw Error(Errc::bad_parameter,
                  "line " + std::to_string(line.line_no) + ": negative weight");
    raw[line.node] += x;
  }
  return normalize(std::span<const double>(raw));
}

WeightMap load_weights_file(const std::string& path, const Hierarchy& h) {
  return parse_weights(read_file(path), h);
}

CostMap parse_costs(std::string_view text, const Hierarchy& h) {
  CostMap out = unit_costs(h.size());
  for (const auto& line : split_weight_lines(text, h)) {
    const double c = parse_double(line.value, line.line_no);
    if (!(c > 0))
      throw Error(Errc::bad_parameter,
                  "line " + std::to_string(line.line_no) + ": price must be positive");
    out.c[line.node] = c;
  }
  return out;
}

CostMap load_costs_file(const std::string& path, const Hierarchy& h) {
  return parse_costs(read_file(path), h);
}

DistributionSpec parse_distribution_spec(std::string_view text,
                                         std::uint64_t seed) {
  DistributionSpec spec;
  spec.seed = seed;
  if (text == "equal") {
    spec.kind = DistributionKind::equal;
  } else if (text == "uniform") {
    spec.kind = DistributionKind::uniform;
  } else if (text == "exponential") {
    spec.kind = DistributionKind::exponential;
  } else if (text.starts_with("zipf")) {
    spec.kind = DistributionKind::zipf;
    if (text.size() > 4) {
      if (text[4] != ':')
        throw Error(Errc::bad_parameter, "expected zipf:<a>");
      spec.zipf_a = parse_double(text.substr(5), 0);
    }
    if (!(spec.zipf_a > 1))
      throw Error(Errc::bad_parameter, "zipf parameter must exceed 1");
  } else if (text.starts_with("file:")) {
    spec.kind = DistributionKind::file;
    spec.path = std::string(text.substr(5));
  } else {
    throw Error(Errc::bad_parameter,
                "unknown distribution '" + std::string(text) + "'");
  }
  return spec;
}

std::string to_string(const DistributionSpec& spec) {
  switch (spec.kind) {
    case DistributionKind::equal: return "equal";
    case DistributionKind::uniform: return "uniform";
    case DistributionKind::exponential: return "exponential";
    case DistributionKind::zipf: {
      std::ostringstream out;
      out << "zipf:" << spec.zipf_a;
      return out.str();
    }
    case DistributionKind::file: return "file:" + spec.path;
  }
  return "?";
}

WeightMap generate(const DistributionSpec& spec, const Hierarchy& h) {
  if (h.size() == 0) throw Error(Errc::empty_input, "empty hierarchy");
  const NodeId skip = h.size() > 1 ? h.synthetic_root() : kNoNode;
  Rng rng(spec.seed);
  switch (spec.kind) {
    case DistributionKind::equal:
      return equal_weights(h);
    case DistributionKind::uniform:
    case DistributionKind::exponential: {
      std::vector<double> raw(h.size());
      for (NodeId v = 0; v < h.size(); ++v) {
        const double x = spec.kind == DistributionKind::uniform
                             ? rng.uniform()
                             : rng.exponential();
        raw[v] = v == skip ? 0.0 : x;
      }
      return normalize(std::span<const double>(raw));
    }
    case DistributionKind::zipf: {
      const ZipfSampler zipf(spec.zipf_a);
      std::vector<std::uint64_t> raw(h.size());
      for (NodeId v = 0; v < h.size(); ++v) {
        const auto x = zipf(rng);
        raw[v] = v == skip ? 0 : x;
      }
      // Heavy tails can overflow the exact sum; fall back to reals then.
      long double total = 0;
      for (auto x : raw) total += static_cast<long double>(x);
      if (total < 1.8e19L) return normalize(std::span<const std::uint64_t>(raw));
      std::vector<double> real(raw.begin(), raw.end());
      return normalize(std::span<const double>(real));
    }
    case DistributionKind::file: {
      WeightMap w = load_weights_file(spec.path, h);
      return w;
    }
  }
  throw Error(Errc::bad_parameter, "unknown distribution kind");
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) return 0;
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

ZipfSampler::ZipfSampler(double a) : a_(a), b_(std::pow(2.0, a - 1.0)) {
  if (!(a > 1)) throw Error(Errc::bad_parameter, "zipf parameter must exceed 1");
}

std::uint64_t ZipfSampler::operator()(Rng& rng) const {
  constexpr double kMax = 1e15;
  for (;;) {
    const double u = rng.uniform();
    const double v = rng.uniform();
    const double x = std::floor(std::pow(u, -1.0 / (a_ - 1.0)));
    if (!(x >= 1) || x > kMax) continue;
    const double t = std::pow(1.0 + 1.0 / x, a_ - 1.0);
    if (v * x * (t - 1.0) / (b_ - 1.0) <= t / b_)
      return static_cast<std::uint64_t>(x);
  }
}

OnlineLearner::OnlineLearner(std::size_t n, NodeId excluded)
    : counts_(n, 0), excluded_(excluded) {}

OnlineLearner::OnlineLearner(std::vector<std::uint64_t> counts, NodeId excluded)
    : counts_(std::move(counts)), excluded_(excluded) {
  for (std::size_t v = 0; v < counts_.size(); ++v) {
    if (v == excluded_ && counts_[v] != 0)
      throw Error(Errc::bad_parameter, "excluded node has labels");
    total_ += counts_[v];
  }
}

void OnlineLearner::observe(NodeId label) {
  if (label >= counts_.size() || label == excluded_)
    throw Error(Errc::unknown_node, "label is not a target node");
  ++counts_[label];
  ++total_;
}

WeightMap OnlineLearner::current() const {
  std::vector<std::uint64_t> numer(counts_.size());
  for (std::size_t v = 0; v < counts_.size(); ++v)
    numer[v] = v == excluded_ ? 0 : counts_[v] + 1;
  if (counts_.size() == 1) numer[0] = 1;
  return normalize(std::span<const std::uint64_t>(numer));
}

}  // namespace igs
