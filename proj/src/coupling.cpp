#include "flockline/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace flockline {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ExpCouplingDraw optimal_exp_coupling(double u, double v, double gamma, Rng& rng) {
  if (!(gamma > 0.0)) throw std::invalid_argument("optimal_exp_coupling: gamma must be positive");
  const bool u_low = u <= v;
  const double lo = u_low ? u : v, hi = u_low ? v : u;
  const double d = hi - lo;
  double plo, phi;
  bool met;
  if (rng.uniform() < std::exp(-gamma * d)) {
    met = true;
    plo = phi = hi + rng.exponential(gamma);
  } else {
    met = false;
    // Lower point: lo + Exp(gamma) conditioned on [0, d); upper: hi + Exp(gamma).
    double q = -std::expm1(-gamma * d);
    plo = lo - std::log1p(-rng.uniform() * q) / gamma;
    if (plo >= hi) plo = std::nextafter(hi, -kInf);
    phi = hi + rng.exponential(gamma);
  }
  ExpCouplingDraw out;
  out.met = met;
  out.p1 = u_low ? plo : phi;
  out.p2 = u_low ? phi : plo;
  out.e1 = out.p1 - u;
  out.e2 = out.p2 - v;
  return out;
}

CoalescingPair::CoalescingPair(double z1, double z2, ThetaPath theta, double beta, double gamma, double a)
    : theta_(std::move(theta)), beta_(beta), gamma_(gamma) {
  if (!(beta > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("coalescing pair: beta, gamma must be positive");
  if (!(a > 0.0)) throw std::invalid_argument("coalescing pair: a must be positive");
  st_.z1 = z1;
  st_.z2 = z2;
  st_.a = a;
  if (z1 == z2) {
    st_.coalesced = true;
    st_.tau = 0.0;
  }
}

CoalescingPair::CoalescingPair(const CoupledPairState& state, ThetaPath theta, double beta, double gamma)
    : st_(state), theta_(std::move(theta)), beta_(beta), gamma_(gamma) {
  if (!(beta > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("coalescing pair: beta, gamma must be positive");
}

double CoalescingPair::drift(double t0, double t1) const {
  return (theta_.cumulative(t1) - theta_.cumulative(t0)) / gamma_;
}

// First time tau with \int_{t0}^{tau} rate0 exp(beta (D(s) - D(t0))) ds = hazard.
double CoalescingPair::next_event_time(double t0, double rate0, double hazard) const {
  const auto& starts = theta_.starts();
  const auto& values = theta_.values();
  double t = t0, R = rate0, E = hazard;
  std::size_t k = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), t) - starts.begin()) - 1;
  while (true) {
    const double end = k + 1 < starts.size() ? starts[k + 1] : kInf;
    const double b = beta_ * values[k] / gamma_;
    if (b == 0.0) {
      double need = E / R;
      if (t + need <= end) return t + need;
      E -= R * (end - t);
    } else {
      double full = std::isinf(end) ? kInf : R * std::expm1(b * (end - t)) / b;
      if (E <= full) return t + std::log1p(b * E / R) / b;
      E -= full;
      R *= std::exp(b * (end - t));
    }
    t = end;
    ++k;
  }
}

void CoalescingPair::move_to(double t) {
  double d = drift(st_.t, t);
  st_.z1 -= d;
  st_.z2 -= d;
  st_.t = t;
}

bool CoalescingPair::step(Rng& rng, double horizon) {
  auto w = [&](double x) { return std::exp(-beta_ * x); };
  if (st_.coalesced) {
    double tau = next_event_time(st_.t, w(st_.z1), rng.exponential(1.0));
    if (tau > horizon) {
      move_to(horizon);
      return false;
    }
    move_to(tau);
    double z = rng.exponential(gamma_);
    st_.z1 += z;
    st_.z2 = st_.z1;
    ++st_.jumps;
    return true;
  }

  const bool one_low = st_.z1 <= st_.z2;
  double lo = one_low ? st_.z1 : st_.z2, hi = one_low ? st_.z2 : st_.z1;
  if (st_.phase == CouplingPhase::Sync && lo >= hi - st_.a) {
    st_.phase = CouplingPhase::OptimalAttempt;
    st_.sigma_log.push_back(st_.t);
    return true;
  }

  double tau = next_event_time(st_.t, w(lo), rng.exponential(1.0));
  if (tau > horizon) {
    move_to(horizon);
    return false;
  }
  move_to(tau);
  lo = one_low ? st_.z1 : st_.z2;
  hi = one_low ? st_.z2 : st_.z1;
  double& zl = one_low ? st_.z1 : st_.z2;
  double& zh = one_low ? st_.z2 : st_.z1;
  const double joint = std::exp(-beta_ * (hi - lo));
  const bool both = rng.uniform() < joint;
  ++st_.jumps;

  if (st_.phase == CouplingPhase::Sync) {
    double z = rng.exponential(gamma_);
    if (both) {
      zl += z;
      zh += z;
    } else {
      zl += z;
    }
    return true;
  }

  if (both) {
    ExpCouplingDraw d = optimal_exp_coupling(lo, hi, gamma_, rng);
    zl = d.p1;
    zh = d.p2;
    if (d.met) {
      st_.coalesced = true;
      st_.tau = tau;
      st_.successes = 1;
      zh = zl;
    }
  } else {
    zl += rng.exponential(gamma_);
  }
  st_.sigma_log.push_back(tau);
  ++st_.cycle;
  st_.phase = CouplingPhase::Sync;
  return true;
}

void CoalescingPair::run_until(Rng& rng, double horizon) {
  while (step(rng, horizon)) {
  }
}

CoupledPairState coalescing_step(const CoupledPairState& state, const ThetaPath& theta, double beta, double gamma,
                                 Rng& rng) {
  CoalescingPair pair(state, theta, beta, gamma);
  pair.step(rng, kInf);
  return pair.state();
}

double coalescence_lower_bound(double a, double beta, double gamma) {
  if (!(a > 0.0) || !(beta > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("coalescence_lower_bound: bad parameters");
  const double below = gamma * std::exp(-2.0 * a * (beta + gamma)) * std::expm1(beta * a) / beta;
  const double above = gamma * std::exp(-(beta + 2.0 * gamma) * a) / (beta + 2.0 * gamma);
  return below + above;
}

CoalescenceRun run_coalescence(double z1, double z2, const ThetaPath& theta, double beta, double gamma, double a,
                               int max_cycles, double horizon, Rng& rng) {
  CoalescingPair pair(z1, z2, theta, beta, gamma, a);
  while (!pair.state().coalesced && pair.state().cycle < max_cycles) {
    if (!pair.step(rng, horizon)) break;
  }
  const auto& s = pair.state();
  return {s.coalesced, s.tau, s.cycle, s.sigma_log};
}

PairedSystems::PairedSystems(const Model& model, std::vector<double> x1, std::vector<double> x2)
    : model_(model), x1_(std::move(x1)), x2_(std::move(x2)) {
  if (x1_.empty() || x1_.size() != x2_.size()) throw std::invalid_argument("paired systems need equal nonzero n");
  auto avg = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  m1_ = avg(x1_);
  m2_ = avg(x2_);
}

void PairedSystems::refresh() const {
  const std::size_t n = x1_.size();
  w1_.resize(n);
  w2_.resize(n);
  total_ = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    RateEval a = model_.rate.eval(x1_[i] - m1_), b = model_.rate.eval(x2_[i] - m2_);
    if (a.overflow || b.overflow) overflow_ = true;
    w1_[i] = a.value;
    w2_[i] = b.value;
    total_ += std::max(w1_[i], w2_[i]);
  }
}

double PairedSystems::total_rate() const {
  refresh();
  return total_;
}

std::optional<PairedSystems::Event> PairedSystems::step(Rng& rng, double horizon) {
  refresh();
  const double lambda = total_;
  const double dt = rng.exponential(lambda);
  if (t_ + dt > horizon) {
    t_ = std::max(t_, horizon);
    return std::nullopt;
  }
  const double target = static_cast<double>(rng.bits53()) * 0x1.0p-53 * lambda;
  const std::size_t n = x1_.size();
  std::size_t i = n - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += std::max(w1_[k], w2_[k]);
    if (target < acc) {
      i = k;
      break;
    }
  }
  const double mx = std::max(w1_[i], w2_[i]), mn = std::min(w1_[i], w2_[i]);
  const bool sync = rng.uniform() * mx < mn;
  const double z = model_.jump.sample(rng);
  t_ += dt;
  const double nd = static_cast<double>(n);
  Event ev{t_, static_cast<std::uint32_t>(i), z, false, false, lambda};
  if (sync || w1_[i] > w2_[i]) {
    x1_[i] += z;
    m1_ += z / nd;
    ev.moves1 = true;
  }
  if (sync || w2_[i] > w1_[i]) {
    x2_[i] += z;
    m2_ += z / nd;
    ev.moves2 = true;
  }
  return ev;
}

std::optional<PairEvent> pair_sync_step(PairedSystems& pair, Rng& rng, double horizon) {
  return pair.step(rng, horizon);
}

}  // namespace flockline
