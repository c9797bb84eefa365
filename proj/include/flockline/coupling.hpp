#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "flockline/meanfield.hpp"
#include "flockline/model.hpp"
#include "flockline/random.hpp"

namespace flockline {

struct ExpCouplingDraw {
  double e1;
  double e2;
  bool met;
  double p1;  // u + e1
  double p2;  // v + e2, identical to p1 when met
};

// Maximal coupling of u + Exp(gamma) and v + Exp(gamma).
ExpCouplingDraw optimal_exp_coupling(double u, double v, double gamma, Rng& rng);

enum class CouplingPhase { Sync, OptimalAttempt };

struct CoupledPairState {
  double z1 = 0.0, z2 = 0.0;
  double t = 0.0;
  CouplingPhase phase = CouplingPhase::Sync;
  int cycle = 0;
  bool coalesced = false;
  double a = 0.5;
  std::vector<double> sigma_log{0.0};
  double tau = -1.0;  // coalescence time once coalesced
  std::uint64_t jumps = 0;
  int successes = 0;  // met joint jumps (0 or 1)
};

// Exponential-rate / exponential-jump processes with downward drift Theta(t)/gamma.
class CoalescingPair {
 public:
  CoalescingPair(double z1, double z2, ThetaPath theta, double beta, double gamma, double a);
  CoalescingPair(const CoupledPairState& state, ThetaPath theta, double beta, double gamma);

  // One jump event (or an instantaneous phase change); false when the next event lies past `horizon`,
  // in which case the state is advanced to `horizon`.
  bool step(Rng& rng, double horizon);
  void run_until(Rng& rng, double horizon);

  const CoupledPairState& state() const { return st_; }
  double drift(double t0, double t1) const;

 private:
  double next_event_time(double t0, double rate0, double hazard) const;
  void move_to(double t);
  void enter_sync();

  CoupledPairState st_;
  ThetaPath theta_;
  double beta_, gamma_;
};

CoupledPairState coalescing_step(const CoupledPairState& state, const ThetaPath& theta, double beta, double gamma,
                                 Rng& rng);

struct CoalescenceRun {
  bool coalesced;
  double tau;
  int cycles_used;
  std::vector<double> sigmas;
};

// p(a) = E[exp(-(beta+gamma)(a + |E - a|))], E ~ Exp(gamma): per-cycle coalescence lower bound.
double coalescence_lower_bound(double a, double beta, double gamma);

CoalescenceRun run_coalescence(double z1, double z2, const ThetaPath& theta, double beta, double gamma, double a,
                               int max_cycles, double horizon, Rng& rng);

// Two n-particle systems coupled index by index: synchronous jumps at the smaller rate,
// solo jumps for the faster one at the rate difference.
class PairedSystems {
 public:
  PairedSystems(const Model& model, std::vector<double> x1, std::vector<double> x2);

  struct Event {
    double time;
    std::uint32_t particle;
    double jump_size;
    bool moves1, moves2;
    double total_rate;
  };

  std::optional<Event> step(Rng& rng, double horizon);

  double total_rate() const;
  const std::vector<double>& x1() const { return x1_; }
  const std::vector<double>& x2() const { return x2_; }
  double m1() const { return m1_; }
  double m2() const { return m2_; }
  double t() const { return t_; }
  bool overflow() const { return overflow_; }

 private:
  void refresh() const;

  Model model_;
  std::vector<double> x1_, x2_;
  double m1_, m2_, t_ = 0.0;
  mutable bool overflow_ = false;
  mutable std::vector<double> w1_, w2_;
  mutable double total_ = 0.0;
};

using PairEvent = PairedSystems::Event;
std::optional<PairEvent> pair_sync_step(PairedSystems& pair, Rng& rng, double horizon);

}  // namespace flockline
