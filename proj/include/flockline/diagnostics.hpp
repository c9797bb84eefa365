#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "flockline/engine.hpp"
#include "flockline/measure.hpp"
#include "flockline/model.hpp"
#include "flockline/random.hpp"

namespace flockline {

// Closed-form generator of V(y) = (1/n) sum y_i^2 on centered states.
double lv_closed_form(const std::vector<double>& y, const Model& model);

struct DriftOptions {
  std::size_t mc_replicas = 0;  // 0 skips the Monte Carlo cross-check
  std::uint64_t seed = 1;
  double radius = std::numeric_limits<double>::quiet_NaN();
};

struct DriftReport {
  std::vector<double> state;
  double V_value = 0.0;
  double LV_closed_form = 0.0;
  double LV_monte_carlo = 0.0;
  double LV_monte_carlo_stderr = 0.0;
  double C1_estimate = 0.0;
  bool in_compact_K = true;
};

DriftReport lyapunov_drift(const SystemState& state, const Model& model, const DriftOptions& opt = {});

struct RadiusReport {
  double radius;       // in units of (1/n) sum |y_i|
  double C1_estimate;  // min |LV| over the probed shell at twice the radius
  std::size_t directions;
};

RadiusReport locate_negativity_radius(const Model& model, std::size_t n, std::size_t directions, Rng& rng,
                                      double r_max = 60.0);

// Random centered direction with (1/n) sum |d_i| = 1.
std::vector<double> random_direction(std::size_t n, Rng& rng);

struct VaReport {
  double generator;
  double bound;
  double epsilon_A;
  bool epsilon_grid_estimate;
};

double epsilon_A(const Model& model, double A, bool* grid_estimate = nullptr);
VaReport lyapunov_drift_VA(const SystemState& state, const Model& model, double A);

struct OvershootSample {
  double level;
  double overshoot;
  JumpKind jump;
};

OvershootSample overshoot_sample(const JumpSpec& jump, double l, Rng& rng);

double hat_m(const SystemState& state);

struct StationaryConfig {
  double burn_in_T = 20.0;
  double thin_T = 1.0;
  std::size_t num_samples = 10;
  std::uint64_t seed = 1;
  InitSpec init = InitSpec::point_mass(0.0);
  bool record_events = false;
};

struct StationaryResult {
  std::vector<EmpiricalMeasure> samples;  // centered nu_n snapshots
  double half_w1 = 0.0;                   // W1 of first-half vs second-half pooled samples
  RunResult run;
};

StationaryResult stationary_sample(const Model& model, std::size_t n, const StationaryConfig& cfg);

struct VelocityEstimate {
  double path_velocity;
  double formula_velocity;
  double mean_increment_velocity;  // (m(T) - m(0)) / T
};

VelocityEstimate velocity_estimate(const RunResult& run, double T, const std::vector<EmpiricalMeasure>& stationary,
                                   const Model& model);

enum class ChaosMode { FirstTwo, AllPairs };

struct ChaosEstimate {
  double covariance;
  double standard_error;
  double variance;  // Var f(Y_1)
};

ChaosEstimate chaos_estimate(const std::vector<std::vector<double>>& states, const LipschitzTestFn& f,
                             ChaosMode mode = ChaosMode::FirstTwo);

}  // namespace flockline
