#include "flockline/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flockline/meanfield.hpp"

namespace flockline {

namespace {

constexpr int kScaleBits = 100;
const u128 kRenormFloor = u128(1) << 96;
const double kShiftLimit = 100.0 * std::log(10.0);

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> SystemState::raw() const {
  std::vector<double> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i] + m;
  return x;
}

InitSpec InitSpec::nu_star(double beta, double gamma) {
  InitSpec s;
  s.kind = Kind::NuStar;
  s.beta = beta;
  s.gamma = gamma;
  return s;
}

InitSpec InitSpec::point_mass(double x0) {
  InitSpec s;
  s.kind = Kind::PointMass;
  s.x0 = x0;
  return s;
}

InitSpec InitSpec::uniform_grid(double lo, double hi) {
  InitSpec s;
  s.kind = Kind::UniformGrid;
  s.lo = lo;
  s.hi = hi;
  return s;
}

InitSpec InitSpec::vector(std::vector<double> values) {
  InitSpec s;
  s.kind = Kind::Vector;
  s.values = std::move(values);
  return s;
}

std::vector<double> sample_initial(std::size_t n, const InitSpec& spec, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("init_state: n must be >= 1");
  std::vector<double> x(n);
  switch (spec.kind) {
    case InitSpec::Kind::NuStar: {
      GumbelFixedPoint nu(spec.beta, spec.gamma);
      Rng rng(stream_seed(seed, Stream::Initial));
      for (auto& v : x) v = nu.sample(rng);
      break;
    }
    case InitSpec::Kind::PointMass:
      std::fill(x.begin(), x.end(), spec.x0);
      break;
    case InitSpec::Kind::UniformGrid:
      if (!(spec.hi >= spec.lo)) throw std::invalid_argument("uniform_grid needs hi >= lo");
      for (std::size_t i = 0; i < n; ++i)
        x[i] = spec.lo + (spec.hi - spec.lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      break;
    case InitSpec::Kind::Vector:
      if (spec.values.size() != n) throw std::invalid_argument("init vector length differs from n");
      x = spec.values;
      break;
    default:
      throw std::invalid_argument("unknown initial sampler");
  }
  return x;
}

SystemState state_from_raw(const std::vector<double>& x) {
  SystemState s;
  s.m = mean_of(x);
  s.y.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s.y[i] = x[i] - s.m;
  return s;
}

SystemState init_state(std::size_t n, const InitSpec& spec, std::uint64_t seed) {
  return state_from_raw(sample_initial(n, spec, seed));
}

ParticleSystem::ParticleSystem(const Model& model, const SystemState& init, const SimConfig& cfg)
    : model_(model), cfg_(cfg), base_(init.y), m_(init.m), t_(init.t), overflow_(init.overflow) {
  if (base_.empty()) throw std::invalid_argument("ParticleSystem needs n >= 1");
  if (base_.size() > 0xffffffffULL) throw std::invalid_argument("ParticleSystem: n too large");
  if (cfg_.recenter_every == 0) cfg_.recenter_every = std::uint64_t(1) << 16;
  exp_ = model_.rate.is_exponential();
  beta_ = exp_ ? model_.rate.beta() : 0.0;
  fenwick_on_ = exp_ && cfg_.selection != SelectionPath::Linear;
  rebuild();
}

u128 ParticleSystem::quantize(double b) const {
  double v = std::ldexp(std::exp(-beta_ * b - eref_), kScaleBits);
  u128 q = static_cast<u128>(v);
  return q == 0 ? u128(1) : q;
}

void ParticleSystem::set_leaf(std::size_t i, u128 v) {
  u128 old = leaves_[i];
  leaves_[i] = v;
  total_ += v - old;
  if (fenwick_on_) tree_.add(i, v - old);
}

void ParticleSystem::rebuild() {
  for (auto& b : base_) b -= shift_;
  shift_ = 0.0;
  maxbase_ = *std::max_element(base_.begin(), base_.end());
  if (!exp_) return;
  const double minbase = *std::min_element(base_.begin(), base_.end());
  eref_ = -beta_ * minbase;
  leaves_.resize(base_.size());
  total_ = 0;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    leaves_[i] = quantize(base_[i]);
    total_ += leaves_[i];
  }
  if (fenwick_on_) tree_.build(leaves_);
}

void ParticleSystem::recenter() {
  for (auto& b : base_) b -= shift_;
  shift_ = 0.0;
  const double mu = mean_of(base_);
  for (auto& b : base_) b -= mu;
  since_recenter_ = 0;
  rebuild();
}

double ParticleSystem::unit() const {
  // rate_i = leaf_i * 2^-100 * exp(eref + beta*shift)
  return std::ldexp(std::exp(std::min(eref_ + beta_ * shift_, kDefaultExpCap)), -kScaleBits);
}

bool ParticleSystem::truncated_now() const { return cfg_.truncation_R && max_raw() > *cfg_.truncation_R; }

void ParticleSystem::refresh_tabulated() const {
  tab_w_.resize(base_.size());
  tab_total_ = 0.0;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    tab_w_[i] = model_.rate(base_[i] - shift_);
    tab_total_ += tab_w_[i];
  }
}

double ParticleSystem::total_rate() const {
  if (truncated_now()) return static_cast<double>(base_.size());
  if (exp_) return static_cast<double>(total_) * unit();
  refresh_tabulated();
  return tab_total_;
}

std::size_t ParticleSystem::select(std::uint64_t k) const {
  const std::size_t n = base_.size();
  if (truncated_now()) return static_cast<std::size_t>((static_cast<u128>(k) * n) >> 53);
  if (exp_) {
    const u128 hi = total_ >> 53;
    const u128 lo = total_ & ((u128(1) << 53) - 1);
    const u128 target = hi * k + ((lo * k) >> 53);
    if (fenwick_on_) return tree_.find(target);
    u128 acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += leaves_[i];
      if (target < acc) return i;
    }
    return n - 1;
  }
  const double target = static_cast<double>(k) * 0x1.0p-53 * tab_total_;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += tab_w_[i];
    if (target < acc) return i;
  }
  for (std::size_t i = n; i-- > 0;)
    if (tab_w_[i] > 0.0) return i;
  return n - 1;
}

std::optional<EventRecord> ParticleSystem::step(Rng& rng, double horizon,
                                                const std::function<void(double)>& before_apply) {
  const bool trunc = truncated_now();
  if (exp_ && !trunc && eref_ + beta_ * shift_ > kDefaultExpCap) overflow_ = true;
  const double lambda = total_rate();
  const double dt = rng.exponential(lambda);
  if (t_ + dt > horizon) {
    t_ = std::max(t_, horizon);
    return std::nullopt;
  }
  if (before_apply) before_apply(t_ + dt);
  const std::size_t i = select(rng.bits53());
  const double z = model_.jump.sample(rng);
  t_ += dt;

  const double nd = static_cast<double>(base_.size());
  base_[i] += z;
  shift_ += z / nd;
  m_ += z / nd;
  maxbase_ = std::max(maxbase_, base_[i]);
  ++events_;
  ++since_recenter_;

  if (since_recenter_ >= cfg_.recenter_every) {
    recenter();
  } else if (exp_) {
    set_leaf(i, quantize(base_[i]));
    if (total_ < kRenormFloor || std::fabs(beta_ * shift_) > kShiftLimit) rebuild();
  }
  return EventRecord{t_, static_cast<std::uint32_t>(i), z, lambda};
}

SystemState ParticleSystem::state() const {
  SystemState s;
  s.y.resize(base_.size());
  for (std::size_t i = 0; i < base_.size(); ++i) s.y[i] = base_[i] - shift_;
  s.m = m_;
  s.t = t_;
  s.overflow = overflow_;
  return s;
}

RunResult simulate(const Model& model, const SystemState& init, const SimConfig& cfg) {
  if (!(cfg.horizon >= init.t)) throw std::invalid_argument("simulate: horizon precedes the initial time");
  for (std::size_t k = 0; k < cfg.snapshot_times.size(); ++k) {
    double s = cfg.snapshot_times[k];
    if (s < init.t || s > cfg.horizon) throw std::invalid_argument("snapshot time outside [t0, T]");
    if (k > 0 && s < cfg.snapshot_times[k - 1]) throw std::invalid_argument("snapshot times must be sorted");
  }
  RunResult res;
  res.initial_raw = init.raw();
  res.initial_t = init.t;
  ParticleSystem sys(model, init, cfg);
  Rng rng(stream_seed(cfg.seed, Stream::Dynamics));
  std::size_t next_snap = 0;
  auto take_snapshots = [&](double upto, bool inclusive) {
    while (next_snap < cfg.snapshot_times.size() &&
           (cfg.snapshot_times[next_snap] < upto || (inclusive && cfg.snapshot_times[next_snap] <= upto))) {
      SystemState s = sys.state();
      res.snapshots.push_back({cfg.snapshot_times[next_snap], s.m, std::move(s.y)});
      ++next_snap;
    }
  };

  double jump_sum = 0.0;
  const std::function<void(double)> hook = [&](double when) { take_snapshots(when, false); };
  const bool want_snaps = !cfg.snapshot_times.empty();
  while (true) {
    if (sys.events() >= cfg.event_budget) {
      res.budget_exceeded = true;
      break;
    }
    auto ev = want_snaps ? sys.step(rng, cfg.horizon, hook) : sys.step(rng, cfg.horizon);
    if (!ev) {
      take_snapshots(cfg.horizon, true);
      break;
    }
    jump_sum += ev->jump_size;
    if (cfg.record_events) res.events.push_back(*ev);
  }
  res.final_state = sys.state();
  res.event_count = sys.events();
  res.jump_sum = jump_sum;
  res.overflow = sys.overflow();
  return res;
}

}  // namespace flockline
