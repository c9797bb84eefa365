#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flockline/engine.hpp"
#include "flockline/measure.hpp"
#include "flockline/model.hpp"

namespace flockline {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Experiment {
  Simulate,
  FluidLimit,
  Stationary,
  Speed,
  Chaos,
  Couple,
  VerifyFixedPoint,
  VerifyPde,
  DriftCheck,
  Overshoot,
};

std::string experiment_name(Experiment e);

struct ExperimentConfig {
  Experiment experiment = Experiment::Simulate;
  std::uint64_t seed = 0;
  Model model{RateSpec::exponential(1.0), JumpSpec::exponential(1.0)};
  std::vector<std::size_t> n_list;
  double T = 0.0;
  std::size_t replicas = 1;
  std::string output_dir = "out";
  InitSpec init = InitSpec::point_mass(0.0);
  bool init_given = false;
  std::vector<double> snapshot_times;
  bool record_events = false;

  double a = 0.5;  // coupling closeness threshold
  std::vector<double> A_list{2.0, 5.0};
  double burn_in_T = 20.0;
  double thin_T = 1.0;
  std::size_t num_samples = 10;
  std::vector<double> x_grid;
  std::vector<double> a_grid;
  std::vector<double> l_grid;
  std::vector<double> theta_starts{0.0};
  std::vector<double> theta_values;  // empty: use <w, nu*>
  double h = 1e-4;
  std::vector<std::pair<double, double>> points;  // (t, x)
  std::vector<LipschitzTestFn> test_fns;
  std::size_t pairs = 500;
  int max_cycles = 40;
  std::size_t draws = 100000;
  std::size_t states = 10;
  std::size_t one_step_replicas = 100000;

  std::uint64_t recenter_every = std::uint64_t(1) << 16;
  std::optional<double> truncation_R;
  std::uint64_t event_budget = 1000000000ULL;
  SelectionPath selection = SelectionPath::Auto;

  nlohmann::json raw;  // the validated document, echoed into the manifest

  SimConfig sim_config(double horizon, std::uint64_t replica_seed) const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

Model parse_model(const nlohmann::json& j);
InitSpec parse_init(const nlohmann::json& j);
LipschitzTestFn parse_test_fn(const nlohmann::json& j);

}  // namespace flockline
