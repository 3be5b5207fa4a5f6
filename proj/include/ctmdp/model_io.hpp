#pragma once

// Text model format. Sections in brackets; inside a section, lines are either
// `key = value` scalars or whitespace-separated numeric rows. `#` starts a
// comment.
//
//   [states]    index point level
//   [actions]   state action-index value
//   [kernel]    i k j rate          (sparse; repeated (i,k,j) entries add up)
//   [cost]      i k c0
//   [weights]   i w w_prime         plus optional scalars rho, b, rho_prime,
//                                   b_prime, L, L_prime, M, c, M_prime, c_prime
//   [discount]  alpha = value
//   [gamma]     i probability       (unlisted states get zero)

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ctmdp/dsv.hpp"
#include "ctmdp/model.hpp"

namespace ctmdp {

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace io {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc{} && ptr == s.data() + s.size()) return v;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return std::nullopt;
}

inline double parse_double(std::string_view s, std::size_t line, std::string_view what) {
  auto v = to_double(s);
  if (!v) throw ParseError(line, "malformed number '" + std::string(trim(s)) + "' for " + std::string(what));
  return *v;
}

inline std::size_t parse_index(std::string_view s, std::size_t line, std::string_view what) {
  s = trim(s);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(line, "malformed index '" + std::string(s) + "' for " + std::string(what));
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

struct Line {
  std::size_t number;
  std::string_view section;
  std::string_view text;
};

/// Walks a sectioned file, calling `on_line` for each non-empty line.
template <typename F>
void for_each_line(std::istream& in, F&& on_line) {
  std::string raw, section;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::string_view text = raw;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError(number, "unterminated section header");
      section = std::string(trim(text.substr(1, text.size() - 2)));
      continue;
    }
    if (section.empty()) throw ParseError(number, "content before the first section");
    on_line(Line{number, section, text});
  }
}

}  // namespace io

inline CtmdpModel read_model(std::istream& in) {
  using namespace io;
  struct StateRow { double point; int level; };
  std::map<std::size_t, StateRow> states;
  std::map<std::pair<std::size_t, std::size_t>, double> actions, costs;
  std::map<std::pair<std::size_t, std::size_t>, std::map<std::size_t, double>> kernel;
  std::map<std::size_t, std::pair<double, double>> weights;
  std::map<std::size_t, double> gamma;
  WeightSystem scalars;
  std::optional<double> alpha;

  for_each_line(in, [&](const Line& ln) {
    const auto eq = ln.text.find('=');
    if (eq != std::string_view::npos) {
      const auto key = trim(ln.text.substr(0, eq));
      const double value = parse_double(ln.text.substr(eq + 1), ln.number, key);
      if (ln.section == "discount" && key == "alpha") {
        alpha = value;
        return;
      }
      if (ln.section == "weights") {
        std::optional<double>* slot = nullptr;
        if (key == "rho") slot = &scalars.rho;
        else if (key == "b") slot = &scalars.b;
        else if (key == "rho_prime") slot = &scalars.rho_prime;
        else if (key == "b_prime") slot = &scalars.b_prime;
        else if (key == "L") slot = &scalars.L;
        else if (key == "L_prime") slot = &scalars.L_prime;
        else if (key == "M") slot = &scalars.M;
        else if (key == "c") slot = &scalars.c;
        else if (key == "M_prime") slot = &scalars.M_prime;
        else if (key == "c_prime") slot = &scalars.c_prime;
        if (slot) {
          *slot = value;
          return;
        }
      }
      throw ParseError(ln.number, "unknown key '" + std::string(key) + "' in [" + std::string(ln.section) + "]");
    }
    const auto f = split_ws(ln.text);
    auto expect = [&](std::size_t n) {
      if (f.size() != n)
        throw ParseError(ln.number, "expected " + std::to_string(n) + " fields in [" + std::string(ln.section) + "]");
    };
    if (ln.section == "states") {
      expect(3);
      const auto i = parse_index(f[0], ln.number, "state index");
      const double level = parse_double(f[2], ln.number, "level");
      if (level < 0 || level != static_cast<double>(static_cast<int>(level)))
        throw ParseError(ln.number, "nesting level must be a nonnegative integer");
      if (!states.emplace(i, StateRow{parse_double(f[1], ln.number, "point"), static_cast<int>(level)}).second)
        throw ParseError(ln.number, "duplicate state " + std::to_string(i));
    } else if (ln.section == "actions") {
      expect(3);
      const auto key = std::make_pair(parse_index(f[0], ln.number, "state"), parse_index(f[1], ln.number, "action"));
      if (!actions.emplace(key, parse_double(f[2], ln.number, "action value")).second)
        throw ParseError(ln.number, "duplicate action");
    } else if (ln.section == "kernel") {
      expect(4);
      const auto i = parse_index(f[0], ln.number, "state");
      const auto k = parse_index(f[1], ln.number, "action");
      const auto j = parse_index(f[2], ln.number, "target");
      kernel[{i, k}][j] += parse_double(f[3], ln.number, "rate");
    } else if (ln.section == "cost") {
      expect(3);
      const auto key = std::make_pair(parse_index(f[0], ln.number, "state"), parse_index(f[1], ln.number, "action"));
      if (!costs.emplace(key, parse_double(f[2], ln.number, "cost")).second)
        throw ParseError(ln.number, "duplicate cost");
    } else if (ln.section == "weights") {
      expect(3);
      const auto i = parse_index(f[0], ln.number, "state");
      weights[i] = {parse_double(f[1], ln.number, "w"), parse_double(f[2], ln.number, "w_prime")};
    } else if (ln.section == "gamma") {
      expect(2);
      gamma[parse_index(f[0], ln.number, "state")] = parse_double(f[1], ln.number, "gamma");
    } else {
      throw ParseError(ln.number, "unknown section [" + std::string(ln.section) + "]");
    }
  });

  CtmdpModel m;
  const std::size_t n = states.size();
  if (n == 0) throw Error("model has no [states]");
  for (std::size_t i = 0; i < n; ++i) {
    auto it = states.find(i);
    if (it == states.end()) throw Error("state indices must be 0.." + std::to_string(n - 1));
    m.states.points.push_back(it->second.point);
    m.states.levels.push_back(it->second.level);
  }
  m.actions.values.resize(n);
  m.kernel.rows.resize(n);
  m.cost.c0.resize(n);
  for (const auto& [key, value] : actions) {
    auto [i, k] = key;
    if (i >= n) throw Error("action for unknown state " + std::to_string(i));
    if (k != m.actions.values[i].size()) throw Error("action indices of state " + std::to_string(i) + " must be 0..n-1");
    m.actions.values[i].push_back(value);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t na = m.actions.values[i].size();
    m.kernel.rows[i].resize(na);
    m.cost.c0[i].resize(na);
    for (std::size_t k = 0; k < na; ++k) {
      auto c = costs.find({i, k});
      if (c == costs.end()) throw Error("missing cost for state " + std::to_string(i) + ", action " + std::to_string(k));
      m.cost.c0[i][k] = c->second;
      if (auto r = kernel.find({i, k}); r != kernel.end())
        for (const auto& [j, rate] : r->second) m.kernel.rows[i][k].push_back({j, rate});
    }
  }
  for (const auto& [key, row] : kernel)
    if (key.first >= n || key.second >= m.actions.values[key.first].size())
      throw Error("kernel row for unknown (state, action) (" + std::to_string(key.first) + ", " +
                  std::to_string(key.second) + ")");
  for (const auto& [key, c] : costs)
    if (key.first >= n || key.second >= m.actions.values[key.first].size())
      throw Error("cost for unknown (state, action)");

  if (weights.empty()) {
    m.weights.w.assign(n, 1.0);
    m.weights.w_prime.assign(n, 1.0);
  } else {
    if (weights.size() != n || weights.rbegin()->first != n - 1) throw Error("[weights] must list every state");
    for (const auto& [i, ww] : weights) {
      m.weights.w.push_back(ww.first);
      m.weights.w_prime.push_back(ww.second);
    }
  }
  auto w = std::move(m.weights.w);
  auto wp = std::move(m.weights.w_prime);
  m.weights = scalars;
  m.weights.w = std::move(w);
  m.weights.w_prime = std::move(wp);

  if (!alpha) throw Error("missing [discount] alpha");
  m.alpha = *alpha;
  m.gamma.assign(n, 0.0);
  for (const auto& [i, g] : gamma) {
    if (i >= n) throw Error("gamma for unknown state " + std::to_string(i));
    m.gamma[i] = g;
  }
  check_shape(m);
  return m;
}

inline CtmdpModel read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file '" + path + "'");
  try {
    return read_model(in);
  } catch (const ParseError& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_model(std::ostream& out, const CtmdpModel& m) {
  const std::size_t n = m.num_states();
  out << "[states]\n";
  for (std::size_t i = 0; i < n; ++i)
    out << i << ' ' << format_number(m.states.points[i]) << ' ' << m.states.levels[i] << '\n';
  out << "[actions]\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m.num_actions(i); ++k)
      out << i << ' ' << k << ' ' << format_number(m.actions.values[i][k]) << '\n';
  out << "[kernel]\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m.num_actions(i); ++k)
      for (const auto& e : m.kernel.row(i, k))
        out << i << ' ' << k << ' ' << e.to << ' ' << format_number(e.rate) << '\n';
  out << "[cost]\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m.num_actions(i); ++k)
      out << i << ' ' << k << ' ' << format_number(m.cost.c0[i][k]) << '\n';
  out << "[weights]\n";
  const auto& W = m.weights;
  auto scalar = [&](const char* key, const std::optional<double>& v) {
    if (v) out << key << " = " << format_number(*v) << '\n';
  };
  scalar("rho", W.rho);
  scalar("b", W.b);
  scalar("rho_prime", W.rho_prime);
  scalar("b_prime", W.b_prime);
  scalar("L", W.L);
  scalar("L_prime", W.L_prime);
  scalar("M", W.M);
  scalar("c", W.c);
  scalar("M_prime", W.M_prime);
  scalar("c_prime", W.c_prime);
  for (std::size_t i = 0; i < n; ++i)
    out << i << ' ' << format_number(W.w[i]) << ' ' << format_number(W.w_prime[i]) << '\n';
  out << "[discount]\nalpha = " << format_number(m.alpha) << '\n';
  out << "[gamma]\n";
  for (std::size_t i = 0; i < n; ++i)
    if (m.gamma[i] != 0.0) out << i << ' ' << format_number(m.gamma[i]) << '\n';
}

}  // namespace ctmdp
