#pragma once

// Run configuration. Same sectioned key = value syntax as model files:
//
//   [run]    command, model, tol, max_iter, seed, out, episodes, horizon,
//            trajectories, verify_episodes
//   [queue]  lambda, C1, C2, Abar, alpha, gamma_atom, gamma_lo, gamma_hi,
//            n_states, x_min, action_points, band_points, band, fp_tol
//
// When `model` is absent the queueing example is built from [queue].

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "ctmdp/model_io.hpp"
#include "ctmdp/queueing.hpp"

namespace ctmdp {

enum class Command { solve, simulate, verify, example };

inline std::string_view to_string(Command c) {
  switch (c) {
    case Command::solve: return "solve";
    case Command::simulate: return "simulate";
    case Command::verify: return "verify";
    case Command::example: return "example";
  }
  return "?";
}

struct QueueConfig {
  queueing::QueueParams params;
  std::size_t n_states = 250;
  double x_min = 0.05;
  std::size_t action_points = 41;
  std::size_t band_points = 20;
  double band = 0.1;
  double fp_tol = 1e-10;

  queueing::Discretization discretization() const {
    queueing::Discretization d;
    d.x_min = x_min;
    d.action_points = action_points;
    d.band_points = band_points;
    d.band = band;
    return d;
  }

  friend bool operator==(const QueueConfig& a, const QueueConfig& b) {
    return a.params == b.params && a.n_states == b.n_states && a.x_min == b.x_min &&
           a.action_points == b.action_points && a.band_points == b.band_points && a.band == b.band &&
           a.fp_tol == b.fp_tol;
  }
};

struct RunConfig {
  Command command = Command::solve;
  /// Model file; the queueing example is used when empty.
  std::optional<std::string> model_path;
  double tol = 1e-9;
  std::size_t max_iter = 1000000;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::size_t episodes = 10000;
  /// Simulation horizon; chosen from the tail bound when unset.
  std::optional<double> horizon;
  /// Episodes written to the trajectory log.
  std::size_t trajectories = 10;
  std::size_t verify_episodes = 2000;
  QueueConfig queue;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline Command parse_command(std::string_view s, std::size_t line) {
  if (s == "solve") return Command::solve;
  if (s == "simulate") return Command::simulate;
  if (s == "verify") return Command::verify;
  if (s == "example") return Command::example;
  throw ParseError(line, "unknown command '" + std::string(s) + "'");
}

inline std::uint64_t parse_u64(std::string_view s, std::size_t line, std::string_view key) {
  s = io::trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(line, "malformed integer '" + std::string(s) + "' for " + std::string(key));
  return v;
}

}  // namespace detail

/// Parses config text; relative model paths resolve against `base_dir`.
inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  RunConfig cfg;
  std::set<std::string> seen;
  bool have_command = false;

  io::for_each_line(in, [&](const io::Line& ln) {
    const auto eq = ln.text.find('=');
    if (eq == std::string_view::npos) throw ParseError(ln.number, "expected key = value");
    const std::string key(io::trim(ln.text.substr(0, eq)));
    const std::string_view value = io::trim(ln.text.substr(eq + 1));
    const std::string qualified = std::string(ln.section) + "." + key;
    if (!seen.insert(qualified).second) throw ParseError(ln.number, "duplicate key '" + key + "'");
    auto num = [&] { return io::parse_double(value, ln.number, key); };
    auto positive = [&] {
      const double v = num();
      if (!(v > 0.0)) throw ParseError(ln.number, "'" + key + "' must be positive");
      return v;
    };
    auto count = [&] { return static_cast<std::size_t>(detail::parse_u64(value, ln.number, key)); };

    if (ln.section == "run") {
      if (key == "command") {
        cfg.command = detail::parse_command(value, ln.number);
        have_command = true;
      } else if (key == "model") {
        if (value.empty()) throw ParseError(ln.number, "'model' must name a file");
        std::filesystem::path p{std::string(value)};
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        if (!std::filesystem::exists(p)) throw ParseError(ln.number, "model file '" + p.string() + "' does not exist");
        cfg.model_path = std::filesystem::absolute(p).lexically_normal().string();
      } else if (key == "tol") {
        cfg.tol = positive();
      } else if (key == "max_iter") {
        cfg.max_iter = count();
      } else if (key == "seed") {
        cfg.seed = detail::parse_u64(value, ln.number, key);
      } else if (key == "out") {
        if (value.empty()) throw ParseError(ln.number, "'out' must name a directory");
        cfg.out = std::string(value);
      } else if (key == "episodes") {
        cfg.episodes = count();
      } else if (key == "horizon") {
        cfg.horizon = positive();
      } else if (key == "trajectories") {
        cfg.trajectories = count();
      } else if (key == "verify_episodes") {
        cfg.verify_episodes = count();
      } else {
        throw ParseError(ln.number, "unknown key '" + key + "' in [run]");
      }
    } else if (ln.section == "queue") {
      auto& q = cfg.queue;
      auto& p = q.params;
      if (key == "lambda") p.lambda = num();
      else if (key == "C1") p.C1 = num();
      else if (key == "C2") p.C2 = num();
      else if (key == "Abar") p.Abar = num();
      else if (key == "alpha") p.alpha = num();
      else if (key == "gamma_atom") p.gamma_atom = num();
      else if (key == "gamma_lo") p.gamma_lo = num();
      else if (key == "gamma_hi") p.gamma_hi = num();
      else if (key == "n_states") q.n_states = count();
      else if (key == "x_min") q.x_min = num();
      else if (key == "action_points") q.action_points = count();
      else if (key == "band_points") q.band_points = count();
      else if (key == "band") q.band = num();
      else if (key == "fp_tol") q.fp_tol = positive();
      else throw ParseError(ln.number, "unknown key '" + key + "' in [queue]");
    } else {
      throw ParseError(ln.number, "unknown section [" + std::string(ln.section) + "]");
    }
  });

  if (!have_command) throw Error("missing required key 'command' in [run]");
  if (cfg.max_iter == 0) throw Error("'max_iter' must be positive");
  if (cfg.episodes < 2 && cfg.command == Command::simulate) throw Error("'episodes' must be at least 2");
  if (cfg.verify_episodes < 2 && cfg.command == Command::verify) throw Error("'verify_episodes' must be at least 2");
  if (cfg.command == Command::example && cfg.model_path)
    throw Error("'model' does not apply to the example command");
  if (!cfg.model_path) {
    queueing::validate(cfg.queue.params);
    if (cfg.queue.n_states < 2) throw Error("'n_states' must be at least 2");
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  try {
    return parse_config(in, std::filesystem::path(path).parent_path());
  } catch (const ParseError& e) {
    throw Error(path + ": " + e.what());
  }
}

inline RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {}) {
  std::istringstream in(text);
  return parse_config(in, base_dir);
}

/// Canonical form: every key, fixed order, shortest round-trip numbers.
inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n";
  o << "command = " << to_string(c.command) << '\n';
  if (c.model_path) o << "model = " << *c.model_path << '\n';
  o << "tol = " << format_number(c.tol) << '\n';
  o << "max_iter = " << c.max_iter << '\n';
  o << "seed = " << c.seed << '\n';
  o << "out = " << c.out << '\n';
  o << "episodes = " << c.episodes << '\n';
  if (c.horizon) o << "horizon = " << format_number(*c.horizon) << '\n';
  o << "trajectories = " << c.trajectories << '\n';
  o << "verify_episodes = " << c.verify_episodes << '\n';
  const auto& q = c.queue;
  const auto& p = q.params;
  o << "[queue]\n";
  o << "lambda = " << format_number(p.lambda) << '\n';
  o << "C1 = " << format_number(p.C1) << '\n';
  o << "C2 = " << format_number(p.C2) << '\n';
  o << "Abar = " << format_number(p.Abar) << '\n';
  o << "alpha = " << format_number(p.alpha) << '\n';
  o << "gamma_atom = " << format_number(p.gamma_atom) << '\n';
  o << "gamma_lo = " << format_number(p.gamma_lo) << '\n';
  o << "gamma_hi = " << format_number(p.gamma_hi) << '\n';
  o << "n_states = " << q.n_states << '\n';
  o << "x_min = " << format_number(q.x_min) << '\n';
  o << "action_points = " << q.action_points << '\n';
  o << "band_points = " << q.band_points << '\n';
  o << "band = " << format_number(q.band) << '\n';
  o << "fp_tol = " << format_number(q.fp_tol) << '\n';
  return o.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical config with the output directory blanked, so that
/// equal experiments written to different places hash alike.
inline std::uint64_t config_hash(const RunConfig& c) {
  RunConfig k = c;
  k.out.clear();
  return fnv1a(serialize_config(k));
}

}  // namespace ctmdp
