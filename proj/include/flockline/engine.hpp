#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flockline/fenwick.hpp"
#include "flockline/model.hpp"
#include "flockline/random.hpp"

namespace flockline {

using u128 = unsigned __int128;

struct SystemState {
  std::vector<double> y;  // centered positions
  double m = 0.0;         // empirical mean of the raw positions
  double t = 0.0;
  bool overflow = false;

  std::size_t n() const { return y.size(); }
  std::vector<double> raw() const;
};

struct EventRecord {
  double time;
  std::uint32_t particle;
  double jump_size;
  double total_rate_before;
};

struct Snapshot {
  double t;
  double m;
  std::vector<double> y;
};

enum class SelectionPath { Auto, Linear, Fenwick };

struct SimConfig {
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t recenter_every = std::uint64_t(1) << 16;
  std::optional<double> truncation_R;
  bool record_events = false;
  std::vector<double> snapshot_times;
  std::uint64_t event_budget = 1000000000ULL;
  SelectionPath selection = SelectionPath::Auto;
};

struct InitSpec {
  enum class Kind { NuStar, PointMass, UniformGrid, Vector };
  Kind kind = Kind::PointMass;
  double beta = 1.0, gamma = 1.0;  // NuStar
  double x0 = 0.0;                 // PointMass
  double lo = 0.0, hi = 1.0;       // UniformGrid
  std::vector<double> values;      // Vector

  static InitSpec nu_star(double beta, double gamma);
  static InitSpec point_mass(double x0);
  static InitSpec uniform_grid(double lo, double hi);
  static InitSpec vector(std::vector<double> values);
};

// Raw positions drawn from an InitSpec (no centering).
std::vector<double> sample_initial(std::size_t n, const InitSpec& spec, std::uint64_t seed);
SystemState init_state(std::size_t n, const InitSpec& spec, std::uint64_t seed);
SystemState state_from_raw(const std::vector<double>& x);

// n-particle flocking process in centered coordinates.
class ParticleSystem {
 public:
  ParticleSystem(const Model& model, const SystemState& init, const SimConfig& cfg);

  // Advances by one event if it occurs before `horizon`; otherwise freezes at horizon.
  // `before_apply(event_time)` runs after the holding time is drawn, before the state changes.
  std::optional<EventRecord> step(Rng& rng, double horizon, const std::function<void(double)>& before_apply = {});

  // Total rate and per-particle selection index for a 53-bit draw k.
  double total_rate() const;
  std::size_t select(std::uint64_t k) const;

  SystemState state() const;
  double y(std::size_t i) const { return base_[i] - shift_; }
  double m() const { return m_; }
  double t() const { return t_; }
  std::size_t n() const { return base_.size(); }
  double max_raw() const { return maxbase_ - shift_ + m_; }
  bool overflow() const { return overflow_; }
  bool truncated_now() const;
  std::uint64_t events() const { return events_; }
  bool uses_fenwick() const { return fenwick_on_; }

  void recenter();

 private:
  void rebuild();
  u128 quantize(double b) const;
  void set_leaf(std::size_t i, u128 v);
  double unit() const;
  void refresh_tabulated() const;

  Model model_;
  SimConfig cfg_;
  bool exp_ = true;
  bool fenwick_on_ = false;
  double beta_ = 1.0;

  std::vector<double> base_;
  double shift_ = 0.0;
  double m_ = 0.0;
  double t_ = 0.0;
  double maxbase_ = 0.0;
  double eref_ = 0.0;
  bool overflow_ = false;
  std::uint64_t events_ = 0;
  std::uint64_t since_recenter_ = 0;

  std::vector<u128> leaves_;
  u128 total_ = 0;
  Fenwick<u128> tree_;

  mutable std::vector<double> tab_w_;
  mutable double tab_total_ = 0.0;
};

struct RunResult {
  std::vector<double> initial_raw;
  double initial_t = 0.0;
  SystemState final_state;
  std::vector<EventRecord> events;
  std::vector<Snapshot> snapshots;
  std::uint64_t event_count = 0;
  double jump_sum = 0.0;
  bool overflow = false;
  bool budget_exceeded = false;

  bool tainted() const { return overflow || budget_exceeded; }
};

RunResult simulate(const Model& model, const SystemState& init, const SimConfig& cfg);

}  // namespace flockline
