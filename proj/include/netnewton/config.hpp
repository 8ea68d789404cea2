#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "netnewton/engine.hpp"
#include "netnewton/objectives.hpp"
#include "netnewton/topology.hpp"

namespace netnewton {

// INI experiment description. Every field maps to one "section.key"; the
// schema is documented in docs/config.md.
struct ExperimentConfig {
  struct Topology {
    std::string kind = "complete";
    int n = 5;
    std::uint64_t seed = 1;
    double er_probability = 0.5;
    int k = 4;
  } topology;

  struct Objective {
    std::string family = "quadratic";
    // Quadratic weights and targets: a list, a single broadcast value,
    // "index" (b_i = i + 1) or "random_int(lo,hi)" drawn with `seed`.
    std::string c = "1";
    std::string b = "index";
    std::uint64_t seed = 1;
    double alpha = 1.0;
    std::string dataset;
    double upsilon = 1.0;
    bool upsilon_given = false;
    bool zero_as_negative = false;
    std::uint64_t partition_seed = 0;
  } objective;

  struct Schedule {
    std::string mode = "scaled";
    // "uniform", a list (fractions allowed), "random_dirichlet(seed)" or
    // "slow(agent,probability)".
    std::string p = "uniform";
  } schedule;

  struct Run {
    std::vector<std::string> algorithms{"async_newton"};
    std::string eps = "auto";
    std::string sync_eps = "1";
    int sync_K = 1;
    long T = 1000;
    int seeds = 1;
    std::uint64_t seed = 1;
    long record_every = 0;
    double x0 = 0.0;
    int slow_agent = -1;
    double slow_factor = 100.0;
    std::optional<double> stop_rel_err;
  } run;

  struct Outputs {
    std::string directory;
    bool traces = true;
    bool snapshots = false;
    bool plot = true;
  } outputs;

  struct Sweep {
    std::vector<std::string> topologies{"complete", "cyclic", "path", "ring", "erdos_renyi"};
    std::vector<int> sizes{5, 10, 15, 20, 25, 30};
    int seeds = 100;
    double target = 0.01;
    double c_lo = 1.0, c_hi = 100.0;
    double b_lo = 1.0, b_hi = 100.0;
    long max_activations = 2'000'000;
  } sweep;

  struct Verify {
    int states = 50;
    std::uint64_t seed = 3;
    std::optional<double> eps;
    double tamper_row_sum = 0.0;
    int envelope_seeds = 200;
    long envelope_T = 5000;
  } verify;

  // Directory of the config file; relative dataset paths resolve against it.
  std::filesystem::path base_dir;
};

// Throws ConfigError naming the offending section.key.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const ExperimentConfig& cfg);

// Number list with optional fractions, e.g. "2/15, 0.2, 1".
std::vector<double> parse_number_list(const std::string& text, const std::string& key);

// Builds the graph, consensus matrix and local objectives for one instance.
// `instance_seed` replaces topology.seed and objective.seed when given.
ProblemSpec build_problem(const ExperimentConfig& cfg,
                          std::optional<std::uint64_t> instance_seed = std::nullopt);

std::vector<double> build_probabilities(const ExperimentConfig& cfg, int n);
ActivationSchedule build_schedule(const ExperimentConfig& cfg, int n, std::uint64_t seed);
TimeModel build_time_model(const ExperimentConfig& cfg, int n);

// 0.9 * eps_as_max under `auto`; in uniform_unscaled mode divided by max p
// (n times larger for uniform p).
double resolve_eps(const std::string& eps, const ProblemSpec& spec, const ActivationSchedule& s);

}  // namespace netnewton
