#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "macrokin/errors.hpp"
#include "macrokin/exact_linalg.hpp"

namespace macrokin {

using Stoich = std::vector<int>;

// Jump n -> n - alpha + beta with mass-action constant K.
struct Reaction {
  Stoich alpha;
  Stoich beta;
  double rate_constant = 0.0;

  bool operator==(const Reaction&) const = default;

  int reactant_order() const { return std::accumulate(alpha.begin(), alpha.end(), 0); }
};

// Vector of species counts. Ordered lexicographically.
struct State {
  std::vector<std::int64_t> counts;

  State() = default;
  explicit State(std::vector<std::int64_t> c) : counts(std::move(c)) {}
  State(std::initializer_list<std::int64_t> c) : counts(c) {}

  std::size_t size() const { return counts.size(); }
  std::int64_t operator[](std::size_t i) const { return counts[i]; }
  std::int64_t& operator[](std::size_t i) { return counts[i]; }

  auto operator<=>(const State&) const = default;
  bool operator==(const State&) const = default;
};

struct StateHash {
  std::size_t operator()(const State& s) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (auto v : s.counts) {
      h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

using Concentration = std::vector<double>;

// Immutable reaction network: species, reactions, scale M.
class Network {
 public:
  Network(std::vector<std::string> species, std::vector<Reaction> reactions,
          std::int64_t scale_M = 1)
      : species_(std::move(species)), reactions_(std::move(reactions)), scale_(scale_M) {
    validate();
  }

  std::span<const std::string> species() const { return species_; }
  std::span<const Reaction> reactions() const { return reactions_; }
  const Reaction& reaction(std::size_t r) const { return reactions_.at(r); }
  std::size_t num_species() const { return species_.size(); }
  std::size_t num_reactions() const { return reactions_.size(); }
  std::int64_t scale() const { return scale_; }

  std::optional<std::size_t> species_index(std::string_view name) const {
    auto it = std::find(species_.begin(), species_.end(), name);
    if (it == species_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - species_.begin());
  }

  // Same species and reactions at a different M.
  Network with_scale(std::int64_t scale_M) const {
    return Network(species_, reactions_, scale_M);
  }

  bool operator==(const Network&) const = default;

 private:
  void validate() const {
    if (species_.empty()) throw std::invalid_argument("network needs at least one species");
    for (std::size_t i = 0; i < species_.size(); ++i) {
      if (species_[i].empty()) throw std::invalid_argument("empty species name");
      for (std::size_t j = 0; j < i; ++j) {
        if (species_[i] == species_[j])
          throw std::invalid_argument("duplicate species '" + species_[i] + "'");
      }
    }
    if (scale_ < 1) throw std::invalid_argument("scale M must be >= 1");
    for (const auto& r : reactions_) {
      if (r.alpha.size() != species_.size() || r.beta.size() != species_.size())
        throw std::invalid_argument("reaction dimension does not match species count");
      for (std::size_t i = 0; i < species_.size(); ++i) {
        if (r.alpha[i] < 0 || r.beta[i] < 0)
          throw std::invalid_argument("negative stoichiometric coefficient");
      }
      if (r.alpha == r.beta) throw std::invalid_argument("no-op reaction (reactants equal products)");
      if (!(r.rate_constant >= 0.0) || !std::isfinite(r.rate_constant))
        throw std::invalid_argument("rate constant must be finite and nonnegative");
    }
  }

  std::vector<std::string> species_;
  std::vector<Reaction> reactions_;
  std::int64_t scale_;
};

// A network plus the initial counts declared in the model file.
struct Model {
  Network network;
  State init;
};

// --------------------------------------------------------------------------
// Model file format

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  const auto c0 = static_cast<unsigned char>(s.front());
  if (c0 >= '0' && c0 <= '9') return false;
  for (char ch : s) {
    if (ch == '+' || ch == '=' || ch == ':' || ch == '#' || ch == ' ' || ch == '\t' ||
        ch == '-' || ch == '>' || ch == ',')
      return false;
  }
  return true;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

inline std::string format_shortest(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

}  // namespace detail

// Parses the line-oriented model format:
//
//   species A B
//   scale M=100
//   reaction K=1.0 : A -> B
//   init A=100 B=0
//
// `#` starts a comment. Sides are `+`-separated `<mult> <species>` terms;
// `0` denotes the empty complex.
inline Model parse_model(std::string_view text) {
  std::vector<std::string> species;
  bool have_species = false;
  std::optional<std::int64_t> scale;
  std::vector<Reaction> reactions;
  std::optional<std::vector<std::int64_t>> init;

  auto lookup = [&](std::string_view name, std::size_t line) -> std::size_t {
    for (std::size_t i = 0; i < species.size(); ++i)
      if (species[i] == name) return i;
    throw ParseError(line, "unknown species '" + std::string(name) + "'");
  };

  auto parse_side = [&](std::string_view side, std::size_t line) {
    Stoich v(species.size(), 0);
    side = detail::trim(side);
    if (side.empty()) throw ParseError(line, "empty reaction side (write 0 for no species)");
    if (side == "0") return v;
    std::size_t start = 0;
    while (start <= side.size()) {
      auto plus = side.find('+', start);
      if (plus == std::string_view::npos) plus = side.size();
      auto term = detail::trim(side.substr(start, plus - start));
      if (term.empty()) throw ParseError(line, "empty term in reaction side");
      std::size_t k = 0;
      while (k < term.size() && term[k] >= '0' && term[k] <= '9') ++k;
      int mult = 1;
      if (k > 0) {
        auto m = detail::parse_number<int>(term.substr(0, k));
        if (!m || *m < 1) throw ParseError(line, "invalid multiplicity in '" + std::string(term) + "'");
        mult = *m;
      }
      auto name = detail::trim(term.substr(k));
      if (!detail::is_identifier(name))
        throw ParseError(line, "invalid term '" + std::string(term) + "'");
      v[lookup(name, line)] += mult;
      start = plus + 1;
    }
    return v;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    auto toks = detail::split_ws(line);
    const auto kw = toks.front();
    if (kw == "species") {
      if (have_species) throw ParseError(line_no, "species already declared");
      if (toks.size() < 2) throw ParseError(line_no, "species line lists no species");
      for (std::size_t i = 1; i < toks.size(); ++i) {
        if (!detail::is_identifier(toks[i]))
          throw ParseError(line_no, "invalid species name '" + std::string(toks[i]) + "'");
        if (std::find(species.begin(), species.end(), toks[i]) != species.end())
          throw ParseError(line_no, "duplicate species '" + std::string(toks[i]) + "'");
        species.emplace_back(toks[i]);
      }
      have_species = true;
    } else if (kw == "scale") {
      if (scale) throw ParseError(line_no, "scale already set");
      if (toks.size() != 2 || toks[1].substr(0, 2) != "M=")
        throw ParseError(line_no, "expected 'scale M=<positive integer>'");
      auto m = detail::parse_number<std::int64_t>(toks[1].substr(2));
      if (!m || *m < 1) throw ParseError(line_no, "scale M must be a positive integer");
      scale = *m;
    } else if (kw == "reaction") {
      if (!have_species) throw ParseError(line_no, "reaction before species declaration");
      auto body = detail::trim(line.substr(kw.size()));
      auto colon = body.find(':');
      if (colon == std::string_view::npos) throw ParseError(line_no, "expected 'K=<rate> : <lhs> -> <rhs>'");
      auto kpart = detail::trim(body.substr(0, colon));
      if (kpart.substr(0, 2) != "K=") throw ParseError(line_no, "expected rate constant 'K=<value>'");
      auto k = detail::parse_number<double>(detail::trim(kpart.substr(2)));
      if (!k || !std::isfinite(*k)) throw ParseError(line_no, "invalid rate constant");
      if (*k < 0) throw ParseError(line_no, "negative rate constant");
      auto eq = body.substr(colon + 1);
      auto arrow = eq.find("->");
      if (arrow == std::string_view::npos) throw ParseError(line_no, "missing '->' in reaction");
      Reaction r{parse_side(eq.substr(0, arrow), line_no), parse_side(eq.substr(arrow + 2), line_no), *k};
      if (r.alpha == r.beta) throw ParseError(line_no, "no-op reaction (reactants equal products)");
      reactions.push_back(std::move(r));
    } else if (kw == "init") {
      if (!have_species) throw ParseError(line_no, "init before species declaration");
      if (init) throw ParseError(line_no, "init already set");
      std::vector<std::int64_t> counts(species.size(), 0);
      std::vector<bool> seen(species.size(), false);
      for (std::size_t i = 1; i < toks.size(); ++i) {
        auto eqp = toks[i].find('=');
        if (eqp == std::string_view::npos) throw ParseError(line_no, "expected <species>=<count>");
        auto idx = lookup(toks[i].substr(0, eqp), line_no);
        auto v = detail::parse_number<std::int64_t>(toks[i].substr(eqp + 1));
        if (!v || *v < 0) throw ParseError(line_no, "init counts must be nonnegative integers");
        if (seen[idx]) throw ParseError(line_no, "species initialised twice");
        seen[idx] = true;
        counts[idx] = *v;
      }
      init = std::move(counts);
    } else {
      throw ParseError(line_no, "unknown directive '" + std::string(kw) + "'");
    }
  }
  if (!have_species) throw ParseError(0, "model declares no species");
  if (!init) init = std::vector<std::int64_t>(species.size(), 0);
  return Model{Network(std::move(species), std::move(reactions), scale.value_or(1)), State(*init)};
}

inline Network parse_network(std::string_view text) { return parse_model(text).network; }

namespace detail {

inline std::string render_side(const Network& net, const Stoich& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == 0) continue;
    if (!out.empty()) out += " + ";
    if (s[i] != 1) out += std::to_string(s[i]) + " ";
    out += net.species()[i];
  }
  return out.empty() ? "0" : out;
}

}  // namespace detail

// Canonical text form; parse_model(render_model(m)) == m.
inline std::string render_model(const Network& net, const State& init) {
  std::ostringstream os;
  os << "species";
  for (const auto& s : net.species()) os << ' ' << s;
  os << "\nscale M=" << net.scale() << '\n';
  for (const auto& r : net.reactions()) {
    os << "reaction K=" << detail::format_shortest(r.rate_constant) << " : "
       << detail::render_side(net, r.alpha) << " -> " << detail::render_side(net, r.beta) << '\n';
  }
  os << "init";
  for (std::size_t i = 0; i < net.num_species(); ++i) os << ' ' << net.species()[i] << '=' << init[i];
  os << '\n';
  return os.str();
}

inline std::string render_model(const Model& m) { return render_model(m.network, m.init); }

inline std::string describe_reaction(const Network& net, std::size_t r) {
  const auto& rx = net.reaction(r);
  return detail::render_side(net, rx.alpha) + " -> " + detail::render_side(net, rx.beta);
}

// --------------------------------------------------------------------------
// Intensities

// lambda(n) = M^(1 - |alpha|) K prod_i n_i (n_i - 1) ... (n_i - alpha_i + 1).
// Zero whenever some n_i < alpha_i.
inline double intensity(const Network& net, const State& n, std::size_t r) {
  const auto& rx = net.reaction(r);
  double prod = rx.rate_constant;
  if (prod == 0.0) return 0.0;
  for (std::size_t i = 0; i < rx.alpha.size(); ++i) {
    const int a = rx.alpha[i];
    if (a == 0) continue;
    if (n[i] < a) return 0.0;
    for (int k = 0; k < a; ++k) prod *= static_cast<double>(n[i] - k);
  }
  const int order = rx.reactant_order();
  if (order != 1) prod *= std::pow(static_cast<double>(net.scale()), 1 - order);
  return prod;
}

// n - alpha + beta, or nullopt when a component would go negative.
inline std::optional<State> apply(const Reaction& rx, const State& n) {
  State m = n;
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] += rx.beta[i] - rx.alpha[i];
    if (m[i] < 0) return std::nullopt;
  }
  return m;
}

// --------------------------------------------------------------------------
// Linear conservation laws

struct ConservationBasis {
  exact::IntMatrix rows;  // each row a primitive mu with <mu, beta - alpha> = 0
  std::size_t num_species = 0;

  std::size_t rank() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

// Integer basis of the left null space of the stoichiometric matrix,
// computed by exact rational elimination.
inline ConservationBasis conservation_basis(const Network& net) {
  exact::IntMatrix st;  // rows: (beta - alpha) per reaction
  st.reserve(net.num_reactions());
  for (const auto& r : net.reactions()) {
    std::vector<std::int64_t> row(net.num_species());
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = r.beta[i] - r.alpha[i];
    st.push_back(std::move(row));
  }
  return ConservationBasis{exact::null_space(st, net.num_species()), net.num_species()};
}

inline std::vector<double> invariant_values(const ConservationBasis& basis, const State& n0) {
  if (n0.size() != basis.num_species) throw std::invalid_argument("state dimension mismatch");
  std::vector<double> b;
  b.reserve(basis.rank());
  for (const auto& mu : basis.rows) {
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) acc += mu[i] * n0[i];
    b.push_back(static_cast<double>(acc));
  }
  return b;
}

inline std::vector<double> invariant_values(const ConservationBasis& basis, std::span<const double> c) {
  if (c.size() != basis.num_species) throw std::invalid_argument("concentration dimension mismatch");
  std::vector<double> b;
  b.reserve(basis.rank());
  for (const auto& mu : basis.rows) {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) acc += static_cast<double>(mu[i]) * c[i];
    b.push_back(acc);
  }
  return b;
}

// Exact integer invariants, for zero-tolerance conservation checks.
inline std::vector<std::int64_t> invariant_counts(const ConservationBasis& basis, const State& n) {
  std::vector<std::int64_t> b;
  b.reserve(basis.rank());
  for (const auto& mu : basis.rows) {
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) acc += mu[i] * n[i];
    b.push_back(acc);
  }
  return b;
}

// Species that can ever become positive from the support of n: closure of
// the support under reactions with K > 0 whose reactants lie in it.
inline std::vector<bool> reachable_support(const Network& net, const State& n) {
  std::vector<bool> s(net.num_species());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = n[i] > 0;
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& r : net.reactions()) {
      if (r.rate_constant <= 0.0) continue;
      bool enabled = true;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (r.alpha[i] > 0 && !s[i]) enabled = false;
      if (!enabled) continue;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (r.beta[i] > 0 && !s[i]) {
          s[i] = true;
          grew = true;
        }
      }
    }
  }
  return s;
}

// True when n lies on a boundary face it can never leave: some species is
// zero and no sequence of reactions can produce it again (e.g. predator
// extinction in Lotka-Volterra).
inline bool trapped_on_boundary(const Network& net, const State& n) {
  const auto s = reachable_support(net, n);
  return std::find(s.begin(), s.end(), false) != s.end();
}

}  // namespace macrokin
