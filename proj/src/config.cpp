#include "netnewton/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "netnewton/errors.hpp"

namespace netnewton {

namespace {

std::string trim(std::string s) {
  boost::algorithm::trim(s);
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::algorithm::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    auto t = trim(p);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

double parse_number(const std::string& token, const std::string& key) {
  const std::string t = trim(token);
  try {
    std::size_t used = 0;
    if (const auto slash = t.find('/'); slash != std::string::npos) {
      const std::string num = trim(t.substr(0, slash));
      const std::string den = trim(t.substr(slash + 1));
      const double a = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument(t);
      const double b = std::stod(den, &used);
      if (used != den.size() || b == 0.0) throw std::invalid_argument(t);
      return a / b;
    }
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, token));
  }
}

long parse_integer(const std::string& token, const std::string& key) {
  const double v = parse_number(token, key);
  if (v != std::floor(v)) throw ConfigError(fmt::format("{}: '{}' is not an integer", key, token));
  return static_cast<long>(v);
}

bool parse_bool(const std::string& token, const std::string& key) {
  const std::string t = boost::algorithm::to_lower_copy(trim(token));
  if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, token));
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string join(const std::vector<std::string>& items) { return boost::algorithm::join(items, ","); }

// Parses "name(a,b,...)" into name and arguments.
std::optional<std::pair<std::string, std::vector<std::string>>> call_form(const std::string& text) {
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')') return std::nullopt;
  return std::make_pair(trim(text.substr(0, open)), split_list(text.substr(open + 1, text.size() - open - 2)));
}

using Setter = std::function<void(ExperimentConfig&, const std::string& value, const std::string& key)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"topology.kind", [](auto& c, auto& v, auto&) { c.topology.kind = trim(v); }},
      {"topology.n", [](auto& c, auto& v, auto& k) { c.topology.n = static_cast<int>(parse_integer(v, k)); }},
      {"topology.seed", [](auto& c, auto& v, auto& k) { c.topology.seed = static_cast<std::uint64_t>(parse_integer(v, k)); }},
      {"topology.er_probability", [](auto& c, auto& v, auto& k) { c.topology.er_probability = parse_number(v, k); }},
      {"topology.k", [](auto& c, auto& v, auto& k) { c.topology.k = static_cast<int>(parse_integer(v, k)); }},

      {"objective.family", [](auto& c, auto& v, auto&) { c.objective.family = trim(v); }},
      {"objective.c", [](auto& c, auto& v, auto&) { c.objective.c = trim(v); }},
      {"objective.b", [](auto& c, auto& v, auto&) { c.objective.b = trim(v); }},
      {"objective.seed", [](auto& c, auto& v, auto& k) { c.objective.seed = static_cast<std::uint64_t>(parse_integer(v, k)); }},
      {"objective.alpha", [](auto& c, auto& v, auto& k) { c.objective.alpha = parse_number(v, k); }},
      {"objective.dataset", [](auto& c, auto& v, auto&) { c.objective.dataset = trim(v); }},
      {"objective.upsilon",
       [](auto& c, auto& v, auto& k) {
         c.objective.upsilon = parse_number(v, k);
         c.objective.upsilon_given = true;
       }},
      {"objective.zero_as_negative", [](auto& c, auto& v, auto& k) { c.objective.zero_as_negative = parse_bool(v, k); }},
      {"objective.partition_seed", [](auto& c, auto& v, auto& k) { c.objective.partition_seed = static_cast<std::uint64_t>(parse_integer(v, k)); }},

      {"schedule.mode", [](auto& c, auto& v, auto&) { c.schedule.mode = trim(v); }},
      {"schedule.p", [](auto& c, auto& v, auto&) { c.schedule.p = trim(v); }},

      {"run.algorithms", [](auto& c, auto& v, auto&) { c.run.algorithms = split_list(v); }},
      {"run.eps", [](auto& c, auto& v, auto&) { c.run.eps = trim(v); }},
      {"run.sync_eps", [](auto& c, auto& v, auto&) { c.run.sync_eps = trim(v); }},
      {"run.sync_K", [](auto& c, auto& v, auto& k) { c.run.sync_K = static_cast<int>(parse_integer(v, k)); }},
      {"run.T", [](auto& c, auto& v, auto& k) { c.run.T = parse_integer(v, k); }},
      {"run.seeds", [](auto& c, auto& v, auto& k) { c.run.seeds = static_cast<int>(parse_integer(v, k)); }},
      {"run.seed", [](auto& c, auto& v, auto& k) { c.run.seed = static_cast<std::uint64_t>(parse_integer(v, k)); }},
      {"run.record_every", [](auto& c, auto& v, auto& k) { c.run.record_every = parse_integer(v, k); }},
      {"run.x0", [](auto& c, auto& v, auto& k) { c.run.x0 = parse_number(v, k); }},
      {"run.slow_agent", [](auto& c, auto& v, auto& k) { c.run.slow_agent = static_cast<int>(parse_integer(v, k)); }},
      {"run.slow_factor", [](auto& c, auto& v, auto& k) { c.run.slow_factor = parse_number(v, k); }},
      {"run.stop_rel_err", [](auto& c, auto& v, auto& k) { c.run.stop_rel_err = parse_number(v, k); }},

      {"outputs.directory", [](auto& c, auto& v, auto&) { c.outputs.directory = trim(v); }},
      {"outputs.traces", [](auto& c, auto& v, auto& k) { c.outputs.traces = parse_bool(v, k); }},
      {"outputs.snapshots", [](auto& c, auto& v, auto& k) { c.outputs.snapshots = parse_bool(v, k); }},
      {"outputs.plot", [](auto& c, auto& v, auto& k) { c.outputs.plot = parse_bool(v, k); }},

      {"sweep.topologies", [](auto& c, auto& v, auto&) { c.sweep.topologies = split_list(v); }},
      {"sweep.sizes",
       [](auto& c, auto& v, auto& k) {
         c.sweep.sizes.clear();
         for (const auto& s : split_list(v)) c.sweep.sizes.push_back(static_cast<int>(parse_integer(s, k)));
       }},
      {"sweep.seeds", [](auto& c, auto& v, auto& k) { c.sweep.seeds = static_cast<int>(parse_integer(v, k)); }},
      {"sweep.target", [](auto& c, auto& v, auto& k) { c.sweep.target = parse_number(v, k); }},
      {"sweep.c_range",
       [](auto& c, auto& v, auto& k) {
         const auto r = parse_number_list(v, k);
         if (r.size() != 2) throw ConfigError(k + ": expected 'lo, hi'");
         c.sweep.c_lo = r[0];
         c.sweep.c_hi = r[1];
       }},
      {"sweep.b_range",
       [](auto& c, auto& v, auto& k) {
         const auto r = parse_number_list(v, k);
         if (r.size() != 2) throw ConfigError(k + ": expected 'lo, hi'");
         c.sweep.b_lo = r[0];
         c.sweep.b_hi = r[1];
       }},
      {"sweep.max_activations", [](auto& c, auto& v, auto& k) { c.sweep.max_activations = parse_integer(v, k); }},

      {"verify.states", [](auto& c, auto& v, auto& k) { c.verify.states = static_cast<int>(parse_integer(v, k)); }},
      {"verify.seed", [](auto& c, auto& v, auto& k) { c.verify.seed = static_cast<std::uint64_t>(parse_integer(v, k)); }},
      {"verify.eps", [](auto& c, auto& v, auto& k) { c.verify.eps = parse_number(v, k); }},
      {"verify.tamper_row_sum", [](auto& c, auto& v, auto& k) { c.verify.tamper_row_sum = parse_number(v, k); }},
      {"verify.envelope_seeds", [](auto& c, auto& v, auto& k) { c.verify.envelope_seeds = static_cast<int>(parse_integer(v, k)); }},
      {"verify.envelope_T", [](auto& c, auto& v, auto& k) { c.verify.envelope_T = parse_integer(v, k); }},
  };
  return table;
}

void check_semantics(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
  };
  try {
    graph_kind_from_string(c.topology.kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("topology.kind: ") + e.what());
  }
  require(c.topology.n >= 1, "topology.n", "must be >= 1");
  require(c.objective.family == "quadratic" || c.objective.family == "logistic", "objective.family",
          "must be quadratic or logistic");
  require(c.objective.alpha > 0.0, "objective.alpha", "must be positive");
  require(c.objective.upsilon > 0.0, "objective.upsilon", "must be positive");
  require(c.objective.family != "logistic" || !c.objective.dataset.empty(), "objective.dataset",
          "required for the logistic family");
  try {
    scaling_mode_from_string(c.schedule.mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("schedule.mode: ") + e.what());
  }
  for (const auto& a : c.run.algorithms) {
    require(a == "async_newton" || a == "sync_newton" || a == "gossip", "run.algorithms",
            "unknown algorithm '" + a + "'");
  }
  require(!c.run.algorithms.empty(), "run.algorithms", "must name at least one algorithm");
  require(c.run.T >= 0, "run.T", "must be >= 0");
  require(c.run.seeds >= 1, "run.seeds", "must be >= 1");
  require(c.run.sync_K >= 0, "run.sync_K", "must be >= 0");
  require(c.run.record_every >= 0, "run.record_every", "must be >= 0");
  require(c.run.slow_factor > 0.0, "run.slow_factor", "must be positive");
  if (c.run.eps != "auto") require(parse_number(c.run.eps, "run.eps") > 0.0, "run.eps", "must be positive");
  require(parse_number(c.run.sync_eps, "run.sync_eps") > 0.0, "run.sync_eps", "must be positive");
  for (const auto& t : c.sweep.topologies) {
    try {
      graph_kind_from_string(t);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("sweep.topologies: ") + e.what());
    }
  }
  for (int n : c.sweep.sizes) require(n >= 2, "sweep.sizes", "sizes must be >= 2");
  require(c.sweep.seeds >= 1, "sweep.seeds", "must be >= 1");
  require(c.sweep.target > 0.0 && c.sweep.target < 1.0, "sweep.target", "must lie in (0, 1)");
  require(c.sweep.c_lo > 0.0 && c.sweep.c_lo <= c.sweep.c_hi, "sweep.c_range", "need 0 < lo <= hi");
  require(c.sweep.b_lo <= c.sweep.b_hi, "sweep.b_range", "need lo <= hi");
  require(c.sweep.max_activations >= 1, "sweep.max_activations", "must be >= 1");
  require(c.verify.states >= 1, "verify.states", "must be >= 1");
  require(c.verify.envelope_seeds >= 1, "verify.envelope_seeds", "must be >= 1");
  require(c.verify.envelope_T >= 1, "verify.envelope_T", "must be >= 1");
}

std::vector<double> per_agent_values(const std::string& text, int n, std::mt19937_64& rng,
                                     const std::string& key) {
  std::vector<double> out(static_cast<std::size_t>(n));
  if (text == "index") {
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i + 1.0;
    return out;
  }
  if (auto call = call_form(text)) {
    if (call->first != "random_int" || call->second.size() != 2) {
      throw ConfigError(key + ": expected random_int(lo,hi)");
    }
    const long lo = parse_integer(call->second[0], key);
    const long hi = parse_integer(call->second[1], key);
    if (lo > hi) throw ConfigError(key + ": random_int needs lo <= hi");
    std::uniform_int_distribution<long> dist(lo, hi);
    for (auto& v : out) v = static_cast<double>(dist(rng));
    return out;
  }
  const auto values = parse_number_list(text, key);
  if (values.size() == 1) return std::vector<double>(static_cast<std::size_t>(n), values.front());
  if (static_cast<int>(values.size()) != n) {
    throw ConfigError(fmt::format("{}: {} values for {} agents", key, values.size(), n));
  }
  return values;
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const auto& t : split_list(text)) out.push_back(parse_number(t, key));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("line {}: {}", e.line(), e.message()));
  }
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' appears outside any section");
    }
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const auto it = table.find(key);
      if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
      it->second(cfg, value.data(), key);
    }
  }
  check_semantics(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

void write_config(std::ostream& out, const ExperimentConfig& c) {
  out << "[topology]\n";
  out << "kind = " << c.topology.kind << '\n';
  out << "n = " << c.topology.n << '\n';
  out << "seed = " << c.topology.seed << '\n';
  out << "er_probability = " << num(c.topology.er_probability) << '\n';
  out << "k = " << c.topology.k << '\n';

  out << "\n[objective]\n";
  out << "family = " << c.objective.family << '\n';
  out << "c = " << c.objective.c << '\n';
  out << "b = " << c.objective.b << '\n';
  out << "seed = " << c.objective.seed << '\n';
  out << "alpha = " << num(c.objective.alpha) << '\n';
  if (!c.objective.dataset.empty()) out << "dataset = " << c.objective.dataset << '\n';
  if (c.objective.upsilon_given) out << "upsilon = " << num(c.objective.upsilon) << '\n';
  out << "zero_as_negative = " << (c.objective.zero_as_negative ? "true" : "false") << '\n';
  out << "partition_seed = " << c.objective.partition_seed << '\n';

  out << "\n[schedule]\n";
  out << "mode = " << c.schedule.mode << '\n';
  out << "p = " << c.schedule.p << '\n';

  out << "\n[run]\n";
  out << "algorithms = " << join(c.run.algorithms) << '\n';
  out << "eps = " << c.run.eps << '\n';
  out << "sync_eps = " << c.run.sync_eps << '\n';
  out << "sync_K = " << c.run.sync_K << '\n';
  out << "T = " << c.run.T << '\n';
  out << "seeds = " << c.run.seeds << '\n';
  out << "seed = " << c.run.seed << '\n';
  out << "record_every = " << c.run.record_every << '\n';
  out << "x0 = " << num(c.run.x0) << '\n';
  out << "slow_agent = " << c.run.slow_agent << '\n';
  out << "slow_factor = " << num(c.run.slow_factor) << '\n';
  if (c.run.stop_rel_err) out << "stop_rel_err = " << num(*c.run.stop_rel_err) << '\n';

  out << "\n[outputs]\n";
  if (!c.outputs.directory.empty()) out << "directory = " << c.outputs.directory << '\n';
  out << "traces = " << (c.outputs.traces ? "true" : "false") << '\n';
  out << "snapshots = " << (c.outputs.snapshots ? "true" : "false") << '\n';
  out << "plot = " << (c.outputs.plot ? "true" : "false") << '\n';

  out << "\n[sweep]\n";
  out << "topologies = " << join(c.sweep.topologies) << '\n';
  std::vector<std::string> sizes;
  for (int n : c.sweep.sizes) sizes.push_back(std::to_string(n));
  out << "sizes = " << join(sizes) << '\n';
  out << "seeds = " << c.sweep.seeds << '\n';
  out << "target = " << num(c.sweep.target) << '\n';
  out << "c_range = " << num(c.sweep.c_lo) << ", " << num(c.sweep.c_hi) << '\n';
  out << "b_range = " << num(c.sweep.b_lo) << ", " << num(c.sweep.b_hi) << '\n';
  out << "max_activations = " << c.sweep.max_activations << '\n';

  out << "\n[verify]\n";
  out << "states = " << c.verify.states << '\n';
  out << "seed = " << c.verify.seed << '\n';
  if (c.verify.eps) out << "eps = " << num(*c.verify.eps) << '\n';
  out << "tamper_row_sum = " << num(c.verify.tamper_row_sum) << '\n';
  out << "envelope_seeds = " << c.verify.envelope_seeds << '\n';
  out << "envelope_T = " << c.verify.envelope_T << '\n';
}

ProblemSpec build_problem(const ExperimentConfig& cfg, std::optional<std::uint64_t> instance_seed) {
  const int n = cfg.topology.n;
  const std::uint64_t topo_seed = instance_seed.value_or(cfg.topology.seed);
  Graph graph;
  if (n == 1) {
    graph = Graph::from_edges(1, {});
  } else {
    GraphSpec gs;
    gs.kind = graph_kind_from_string(cfg.topology.kind);
    gs.k = cfg.topology.k;
    gs.edge_probability = cfg.topology.er_probability;
    try {
      graph = build_graph(gs, n, topo_seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("topology: ") + e.what());
    }
  }

  std::vector<LocalObjective> locals;
  if (cfg.objective.family == "quadratic") {
    std::mt19937_64 rng(instance_seed.value_or(cfg.objective.seed));
    const auto c = per_agent_values(cfg.objective.c, n, rng, "objective.c");
    const auto b = per_agent_values(cfg.objective.b, n, rng, "objective.b");
    for (int i = 0; i < n; ++i) {
      const double ci = c[static_cast<std::size_t>(i)];
      if (!(ci > 0.0)) throw ConfigError("objective.c: weights must be positive");
      locals.push_back(LocalObjective::quadratic(ci, Eigen::VectorXd::Constant(1, b[static_cast<std::size_t>(i)])));
    }
  } else {
    std::filesystem::path path = cfg.objective.dataset;
    if (path.is_relative()) path = cfg.base_dir / path;
    if (!std::filesystem::exists(path)) {
      throw ConfigError("objective.dataset: file not found: " + path.string());
    }
    LibsvmOptions opts;
    opts.zero_as_negative = cfg.objective.zero_as_negative;
    const Dataset ds = parse_libsvm_file(path.string(), opts);
    locals = partition_uniform(ds, n, cfg.objective.upsilon, cfg.objective.partition_seed);
  }
  return make_problem(std::move(graph), std::move(locals), cfg.objective.alpha);
}

std::vector<double> build_probabilities(const ExperimentConfig& cfg, int n) {
  const std::string& text = cfg.schedule.p;
  const std::string key = "schedule.p";
  std::vector<double> p;
  if (text == "uniform") {
    p.assign(static_cast<std::size_t>(n), 1.0 / n);
  } else if (auto call = call_form(text)) {
    if (call->first == "random_dirichlet" && call->second.size() == 1) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(parse_integer(call->second[0], key)));
      std::gamma_distribution<double> gamma(1.0, 1.0);
      p.resize(static_cast<std::size_t>(n));
      double sum = 0.0;
      for (auto& v : p) sum += (v = gamma(rng));
      for (auto& v : p) v /= sum;
    } else if (call->first == "slow" && call->second.size() == 2) {
      const long agent = parse_integer(call->second[0], key);
      const double q = parse_number(call->second[1], key);
      if (agent < 0 || agent >= n) throw ConfigError(key + ": slow agent out of range");
      if (n < 2) throw ConfigError(key + ": slow(...) needs at least two agents");
      p.assign(static_cast<std::size_t>(n), (1.0 - q) / (n - 1));
      p[static_cast<std::size_t>(agent)] = q;
    } else {
      throw ConfigError(key + ": unknown form '" + text + "'");
    }
  } else {
    p = parse_number_list(text, key);
  }
  return p;
}

ActivationSchedule build_schedule(const ExperimentConfig& cfg, int n, std::uint64_t seed) {
  ActivationSchedule s;
  s.p = build_probabilities(cfg, n);
  s.mode = scaling_mode_from_string(cfg.schedule.mode);
  s.seed = seed;
  try {
    s.validate(n);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("schedule.p: ") + e.what());
  }
  return s;
}

TimeModel build_time_model(const ExperimentConfig& cfg, int n) {
  if (cfg.run.slow_agent < 0) return {};
  if (cfg.run.slow_agent >= n) throw ConfigError("run.slow_agent: agent index out of range");
  return TimeModel::slow_agent(n, cfg.run.slow_agent, cfg.run.slow_factor);
}

double resolve_eps(const std::string& eps, const ProblemSpec& spec, const ActivationSchedule& s) {
  if (eps != "auto") return parse_number(eps, "run.eps");
  const double bound = 0.9 * eps_as_bound(spec, s.p);
  if (s.mode == ScalingMode::scaled) return bound;
  // Unscaled coefficient matching the largest scaled step eps / p_max.
  return bound / *std::max_element(s.p.begin(), s.p.end());
}

}  // namespace netnewton
