#include "flockline/measure.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include "flockline/meanfield.hpp"

namespace flockline {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
using GL = boost::math::quadrature::gauss<double, 16>;

double sech2(double u) {
  double c = std::cosh(u);
  return 1.0 / (c * c);
}

double lncosh(double u) {
  u = std::fabs(u);
  return u + std::log1p(std::exp(-2.0 * u)) - std::log(2.0);
}

double integrate_piece(const std::function<double(double)>& g, double a, double b) {
  if (!(b > a)) return 0.0;
  if (b - a < 1.0) return GL::integrate(g, a, b);
  return GK::integrate(g, a, b, 20, 1e-12);
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms) : atoms_(std::move(atoms)) {
  for (double a : atoms_)
    if (!std::isfinite(a)) throw std::invalid_argument("EmpiricalMeasure: non-finite atom");
  std::sort(atoms_.begin(), atoms_.end());
}

double EmpiricalMeasure::cdf(double x) const {
  if (atoms_.empty()) throw std::invalid_argument("cdf of empty measure");
  auto it = std::upper_bound(atoms_.begin(), atoms_.end(), x);
  return static_cast<double>(it - atoms_.begin()) / static_cast<double>(atoms_.size());
}

double EmpiricalMeasure::mean() const {
  if (atoms_.empty()) throw std::invalid_argument("mean of empty measure");
  return std::accumulate(atoms_.begin(), atoms_.end(), 0.0) / static_cast<double>(atoms_.size());
}

double EmpiricalMeasure::integrate(const std::function<double(double)>& f) const {
  if (atoms_.empty()) throw std::invalid_argument("integral against empty measure");
  double s = 0.0;
  for (double a : atoms_) s += f(a);
  return s / static_cast<double>(atoms_.size());
}

EmpiricalMeasure EmpiricalMeasure::shifted(double c) const {
  std::vector<double> v(atoms_);
  for (auto& a : v) a += c;
  return EmpiricalMeasure(std::move(v));
}

ContinuousLaw law_of(const GumbelFixedPoint& nu, double shift) {
  ContinuousLaw law;
  law.cdf = [nu, shift](double x) { return nu.cdf(x - shift); };
  law.quantile = [nu, shift](double p) { return nu.quantile(p) + shift; };
  law.lo = nu.quantile(1e-250) + shift;
  law.hi = nu.quantile(1.0 - 0x1.0p-52) + shift;
  return law;
}

double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.empty() || nu.empty()) throw std::invalid_argument("wasserstein1: empty measure");
  const auto& a = mu.atoms();
  const auto& b = nu.atoms();
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a[0], b[0]);
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    double x = std::min(i < a.size() ? a[i] : std::numeric_limits<double>::infinity(),
                        j < b.size() ? b[j] : std::numeric_limits<double>::infinity());
    total += std::fabs(i / na - j / nb) * (x - prev);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    prev = x;
  }
  return total;
}

double wasserstein1(const EmpiricalMeasure& mu, const ContinuousLaw& law) {
  if (mu.empty()) throw std::invalid_argument("wasserstein1: empty measure");
  const auto& a = mu.atoms();
  const double n = static_cast<double>(a.size());
  double total = 0.0;
  auto piece = [&](double lo, double hi, double level, double Flo, double Fhi) {
    if (!(hi > lo)) return;
    auto g = [&](double x) { return std::fabs(level - law.cdf(x)); };
    if (Flo < level && level < Fhi) {
      double q = std::clamp(law.quantile(level), lo, hi);
      total += integrate_piece(g, lo, q) + integrate_piece(g, q, hi);
    } else {
      total += integrate_piece(g, lo, hi);
    }
  };
  double lo = std::min(law.lo, a.front());
  double x = lo, Fx = law.cdf(lo);
  std::size_t i = 0;
  double level = 0.0;
  while (i < a.size()) {
    double nx = a[i];
    double Fn = law.cdf(nx);
    piece(x, nx, level, Fx, Fn);
    while (i < a.size() && a[i] <= nx) ++i;
    level = i / n;
    x = nx;
    Fx = Fn;
  }
  double hi = std::max(law.hi, a.back());
  piece(x, hi, 1.0, Fx, law.cdf(hi));
  return total;
}

double cdf_sup_distance(const EmpiricalMeasure& mu, const std::function<double(double)>& F) {
  if (mu.empty()) throw std::invalid_argument("cdf_sup_distance: empty measure");
  const auto& a = mu.atoms();
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double Fi = F(a[i]);
    d = std::max({d, (i + 1) / n - Fi, Fi - i / n});
  }
  return d;
}

double tail_functional(const EmpiricalMeasure& mu, double B) {
  if (B < 0.0) throw std::invalid_argument("tail_functional: B must be >= 0");
  if (mu.empty()) return 0.0;
  double s = 0.0;
  for (double x : mu.atoms())
    if (std::fabs(x) >= B) s += std::fabs(x);
  return s / static_cast<double>(mu.size());
}

LipschitzTestFn LipschitzTestFn::identity() { return LipschitzTestFn(); }

LipschitzTestFn LipschitzTestFn::soft_clip(double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("soft_clip scale must be positive");
  LipschitzTestFn f;
  f.kind_ = Kind::SoftClip;
  f.scale_ = scale;
  return f;
}

LipschitzTestFn LipschitzTestFn::piecewise_linear(std::vector<double> xs, std::vector<double> fs) {
  if (xs.empty() || xs.size() != fs.size()) throw std::invalid_argument("piecewise_linear: bad knots");
  for (std::size_t k = 1; k < xs.size(); ++k) {
    if (!(xs[k] > xs[k - 1])) throw std::invalid_argument("piecewise_linear: knots must increase");
    double sl = (fs[k] - fs[k - 1]) / (xs[k] - xs[k - 1]);
    if (std::fabs(sl) > 1.0 + 1e-12) throw std::invalid_argument("piecewise_linear: slope exceeds 1");
  }
  LipschitzTestFn f;
  f.kind_ = Kind::PiecewiseLinear;
  f.xs_ = std::move(xs);
  f.fs_ = std::move(fs);
  return f;
}

double LipschitzTestFn::slope(std::size_t k) const { return (fs_[k + 1] - fs_[k]) / (xs_[k + 1] - xs_[k]); }

double LipschitzTestFn::operator()(double x) const {
  switch (kind_) {
    case Kind::Identity: return x;
    case Kind::SoftClip: return scale_ * std::tanh(x / scale_);
    case Kind::PiecewiseLinear: {
      if (x <= xs_.front()) return fs_.front();
      if (x >= xs_.back()) return fs_.back();
      std::size_t k = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin()) - 1;
      return fs_[k] + slope(k) * (x - xs_[k]);
    }
  }
  return 0.0;
}

double LipschitzTestFn::derivative(double x) const {
  switch (kind_) {
    case Kind::Identity: return 1.0;
    case Kind::SoftClip: return sech2(x / scale_);
    case Kind::PiecewiseLinear: throw std::invalid_argument("piecewise-linear test function has no derivative at knots");
  }
  return 0.0;
}

LipschitzTestFn optimal_potential(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  std::vector<double> pts(mu.atoms());
  pts.insert(pts.end(), nu.atoms().begin(), nu.atoms().end());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<double> fs(pts.size(), 0.0);
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    double diff = nu.cdf(pts[k]) - mu.cdf(pts[k]);
    double sl = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    fs[k + 1] = fs[k] + sl * (pts[k + 1] - pts[k]);
  }
  return LipschitzTestFn::piecewise_linear(pts, fs);
}

struct DriftFunction::Table {
  double lo, hi, h;
  std::vector<double> g, dg;
};

DriftFunction::DriftFunction(const LipschitzTestFn& f, const JumpSpec& jump) : f_(f), jump_(jump) {
  if (f_.kind() == LipschitzTestFn::Kind::SoftClip && jump_.kind() == JumpKind::Exponential) {
    const double s = f_.scale(), gamma = jump_.parameter();
    static std::mutex mu;
    static std::map<std::pair<double, double>, std::shared_ptr<const Table>> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find({s, gamma}); it != cache.end()) {
      table_ = it->second;
      return;
    }
    auto t = std::make_shared<Table>();
    t->lo = -40.0 * s - 40.0 / gamma;
    t->hi = 40.0 * s;
    t->h = std::min(s, 1.0 / gamma) / 64.0;
    std::size_t count = static_cast<std::size_t>(std::ceil((t->hi - t->lo) / t->h)) + 1;
    t->hi = t->lo + t->h * static_cast<double>(count - 1);
    t->g.resize(count);
    t->dg.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      double x = t->lo + t->h * static_cast<double>(k);
      t->g[k] = direct(x);
      t->dg[k] = gamma * t->g[k] - f_.derivative(x);
    }
    table_ = t;
    cache.emplace(std::make_pair(s, gamma), t);
  }
}

double DriftFunction::direct(double x) const {
  using K = LipschitzTestFn::Kind;
  switch (f_.kind()) {
    case K::Identity: return jump_.mean();
    case K::PiecewiseLinear: {
      const auto& xs = f_.xs();
      double g = 0.0;
      for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
        if (xs[k + 1] <= x) continue;
        g += f_.slope(k) * jump_.survival_integral(std::max(xs[k], x) - x, xs[k + 1] - x);
      }
      return g;
    }
    case K::SoftClip: {
      const double s = f_.scale();
      switch (jump_.kind()) {
        case JumpKind::Deterministic: {
          double z = jump_.parameter();
          return s * (std::tanh((x + z) / s) - std::tanh(x / s));
        }
        case JumpKind::Uniform: {
          double b = jump_.parameter();
          return s * s / b * (lncosh((x + b) / s) - lncosh(x / s)) - s * std::tanh(x / s);
        }
        case JumpKind::Exponential: {
          // Composite Gauss-Legendre; sech^2 has poles at distance pi*s/2 from the real axis.
          const double gamma = jump_.parameter();
          auto h = [&](double z) { return sech2((x + z) / s) * std::exp(-gamma * z); };
          const double width = std::min(2.0 * s, 4.0 / gamma);
          const double zmax = std::max(0.0, -x) + 40.0 / gamma + 40.0 * s;
          double total = 0.0;
          for (double a = 0.0; a < zmax; a += width) total += GL::integrate(h, a, a + width);
          return total;
        }
      }
    }
  }
  return 0.0;
}

double DriftFunction::operator()(double x) const {
  if (!table_) return direct(x);
  const Table& t = *table_;
  if (!(x >= t.lo && x < t.hi)) return direct(x);
  double u = (x - t.lo) / t.h;
  std::size_t k = static_cast<std::size_t>(u);
  if (k + 1 >= t.g.size()) return direct(x);
  double r = u - static_cast<double>(k);
  double r2 = r * r, r3 = r2 * r;
  double h00 = 2 * r3 - 3 * r2 + 1, h10 = r3 - 2 * r2 + r, h01 = -2 * r3 + 3 * r2, h11 = r3 - r2;
  return h00 * t.g[k] + h10 * t.h * t.dg[k] + h01 * t.g[k + 1] + h11 * t.h * t.dg[k + 1];
}

void replay(const RunResult& run, double t,
            const std::function<void(double dt, const std::vector<double>& x, double m)>& on_interval,
            const std::function<void(std::size_t i, double old_x, const std::vector<double>& x, double m)>& on_jump) {
  if (t < run.initial_t || t > run.final_state.t + 1e-12) throw std::invalid_argument("replay: t beyond trajectory coverage");
  if (run.event_count > 0 && run.events.size() != run.event_count)
    throw std::invalid_argument("replay: event log not recorded");
  std::vector<double> x = run.initial_raw;
  const double n = static_cast<double>(x.size());
  double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double prev = run.initial_t;
  for (const EventRecord& ev : run.events) {
    if (ev.time > t) break;
    if (on_interval) on_interval(ev.time - prev, x, m);
    double old = x[ev.particle];
    x[ev.particle] += ev.jump_size;
    m += ev.jump_size / n;
    if (on_jump) on_jump(ev.particle, old, x, m);
    prev = ev.time;
  }
  if (on_interval && t > prev) on_interval(t - prev, x, m);
}

namespace {

// Left-endpoint sums over snapshots when no event log exists.
ResidualResult snapshot_residual(const RunResult& run, double t, const std::function<double(const Snapshot&)>& level,
                                 const std::function<double(const Snapshot&)>& integrand) {
  std::vector<const Snapshot*> snaps;
  for (const auto& s : run.snapshots)
    if (s.t <= t) snaps.push_back(&s);
  if (snaps.size() < 1 || snaps.front()->t != run.initial_t || std::fabs(snaps.back()->t - t) > 1e-12)
    throw std::invalid_argument("residual: snapshots must include the start time and t when the event log is absent");
  double integral = 0.0, err = 0.0;
  for (std::size_t k = 0; k + 1 < snaps.size(); ++k) {
    double dt = snaps[k + 1]->t - snaps[k]->t;
    double a = integrand(*snaps[k]), b = integrand(*snaps[k + 1]);
    integral += dt * a;
    err += dt * std::fabs(b - a);
  }
  return {level(*snaps.back()) - level(*snaps.front()) - integral, err, false};
}

}  // namespace

ResidualResult mv_residual(const RunResult& run, const LipschitzTestFn& f, const Model& model, double t) {
  DriftFunction g(f, model.jump);
  const bool have_log = run.event_count == 0 || run.events.size() == run.event_count;
  if (!have_log) {
    auto level = [&](const Snapshot& s) {
      double acc = 0.0;
      for (double y : s.y) acc += f(y + s.m);
      return acc / static_cast<double>(s.y.size());
    };
    auto integrand = [&](const Snapshot& s) {
      double acc = 0.0;
      for (double y : s.y) acc += g(y + s.m) * model.rate(y);
      return acc / static_cast<double>(s.y.size());
    };
    return snapshot_residual(run, t, level, integrand);
  }

  const std::size_t nn = run.initial_raw.size();
  const double n = static_cast<double>(nn);
  double integral = 0.0;
  std::vector<double> gx(nn);
  for (std::size_t i = 0; i < nn; ++i) gx[i] = g(run.initial_raw[i]);

  if (model.rate.is_exponential()) {
    const double beta = model.rate.beta();
    double mref = 0.0, S = 0.0;
    std::size_t since = 0;
    auto full = [&](const std::vector<double>& x, double m) {
      mref = m;
      S = 0.0;
      for (std::size_t i = 0; i < nn; ++i) S += gx[i] * std::exp(-beta * (x[i] - mref));
      since = 0;
    };
    full(run.initial_raw, std::accumulate(run.initial_raw.begin(), run.initial_raw.end(), 0.0) / n);
    replay(
        run, t, [&](double dt, const std::vector<double>&, double m) { integral += dt * S * std::exp(beta * (m - mref)) / n; },
        [&](std::size_t i, double old, const std::vector<double>& x, double m) {
          double gnew = g(x[i]);
          S += gnew * std::exp(-beta * (x[i] - mref)) - gx[i] * std::exp(-beta * (old - mref));
          gx[i] = gnew;
          if (++since >= 1024 || beta * std::fabs(m - mref) > 30.0) full(x, m);
        });
  } else {
    replay(
        run, t,
        [&](double dt, const std::vector<double>& x, double m) {
          double acc = 0.0;
          for (std::size_t i = 0; i < nn; ++i) acc += gx[i] * model.rate(x[i] - m);
          integral += dt * acc / n;
        },
        [&](std::size_t i, double, const std::vector<double>& x, double) { gx[i] = g(x[i]); });
  }

  std::vector<double> xt = run.initial_raw;
  replay(run, t, {}, [&](std::size_t i, double, const std::vector<double>& x, double) { xt[i] = x[i]; });
  double dlevel = 0.0;
  for (std::size_t i = 0; i < nn; ++i) dlevel += f(xt[i]) - f(run.initial_raw[i]);
  return {dlevel / n - integral, 0.0, true};
}

ResidualResult centered_residual(const RunResult& run, const LipschitzTestFn& f, const Model& model, double t) {
  if (!f.differentiable()) throw std::invalid_argument("centered_residual: piecewise-linear f is not differentiable");
  DriftFunction g(f, model.jump);
  const double sigma = model.jump.mean();
  auto integrand_y = [&](const std::vector<double>& y) {
    double gw = 0.0, w = 0.0, fp = 0.0;
    for (double v : y) {
      double wv = model.rate(v);
      gw += g(v) * wv;
      w += wv;
      fp += f.derivative(v);
    }
    const double n = static_cast<double>(y.size());
    return gw / n - sigma * (w / n) * (fp / n);
  };
  auto level_y = [&](const std::vector<double>& y) {
    double acc = 0.0;
    for (double v : y) acc += f(v);
    return acc / static_cast<double>(y.size());
  };

  const bool have_log = run.event_count == 0 || run.events.size() == run.event_count;
  if (!have_log) {
    return snapshot_residual(
        run, t, [&](const Snapshot& s) { return level_y(s.y); }, [&](const Snapshot& s) { return integrand_y(s.y); });
  }

  const std::size_t nn = run.initial_raw.size();
  std::vector<double> y(nn);
  auto center = [&](const std::vector<double>& x, double m) {
    for (std::size_t i = 0; i < nn; ++i) y[i] = x[i] - m;
  };
  std::vector<double> xt = run.initial_raw;
  double mt = std::accumulate(xt.begin(), xt.end(), 0.0) / static_cast<double>(nn);
  center(xt, mt);
  const std::vector<double> y0 = y;
  double integral = 0.0;
  replay(
      run, t,
      [&](double dt, const std::vector<double>& x, double m) {
        center(x, m);
        integral += dt * integrand_y(y);
      },
      [&](std::size_t, double, const std::vector<double>& x, double m) {
        xt = x;
        mt = m;
      });
  center(xt, mt);
  const std::vector<double>& yt = y;
  return {level_y(yt) - level_y(y0) - integral, 0.0, true};
}

}  // namespace flockline
