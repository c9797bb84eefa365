// Picard iteration for the McKean-Vlasov mean: m <- m(0) + E[Y(t) - Y(0)] with Y the tagged
// particle driven by the previous iterate. Exploratory; convergence is reported, not assumed.
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flockline/engine.hpp"
#include "flockline/meanfield.hpp"
#include "flockline/model.hpp"
#include "flockline/random.hpp"

using namespace flockline;

namespace {

double position_at(const TaggedPath& p, double t) {
  auto it = std::upper_bound(p.jump_times.begin(), p.jump_times.end(), t);
  return p.positions[static_cast<std::size_t>(it - p.jump_times.begin())];
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Picard iteration for the self-consistent mean"};
  double beta = 1.0, gamma = 1.0, T = 5.0, dt = 0.05, tol = 1e-3, x0 = 0.0;
  std::size_t particles = 4000;
  int iters = 30;
  std::uint64_t seed = 1;
  std::string init = "nu_star", out = "picard_mean.csv";
  app.add_option("--beta", beta, "rate exponent")->check(CLI::PositiveNumber);
  app.add_option("--gamma", gamma, "exponential jump rate")->check(CLI::PositiveNumber);
  app.add_option("--init", init, "nu_star or point_mass")->check(CLI::IsMember({"nu_star", "point_mass"}));
  app.add_option("--x0", x0, "location for point_mass");
  app.add_option("--T", T, "horizon")->check(CLI::PositiveNumber);
  app.add_option("--dt", dt, "time grid step")->check(CLI::PositiveNumber);
  app.add_option("--particles", particles, "tagged particles per iteration")->check(CLI::PositiveNumber);
  app.add_option("--iters", iters, "maximum iterations")->check(CLI::PositiveNumber);
  app.add_option("--tol", tol, "stop when sup |m_k - m_{k-1}| < tol");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--out", out, "CSV of iterates (iter, t, m)");
  CLI11_PARSE(app, argc, argv);

  const Model model{RateSpec::exponential(beta), JumpSpec::exponential(gamma)};
  const InitSpec spec = init == "nu_star" ? InitSpec::nu_star(beta, gamma) : InitSpec::point_mass(x0);
  const std::vector<double> y0 = sample_initial(particles, spec, derive_seed(seed, 0));

  const std::size_t steps = static_cast<std::size_t>(std::ceil(T / dt));
  std::vector<double> grid(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) grid[k] = std::min(T, k * dt);

  double m0 = 0.0, w0 = 0.0;
  for (double y : y0) m0 += y;
  m0 /= static_cast<double>(particles);
  for (double y : y0) w0 += model.rate(y - m0);
  w0 /= static_cast<double>(particles);
  std::vector<double> m(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) m[k] = m0 + model.jump.mean() * w0 * grid[k];

  std::ofstream csv(out);
  csv << "iter,t,m\n";
  auto dump = [&](int it) {
    for (std::size_t k = 0; k <= steps; ++k) csv << it << ',' << grid[k] << ',' << m[k] << '\n';
  };
  dump(0);

  bool converged = false;
  for (int it = 1; it <= iters && !converged; ++it) {
    auto m_path = [&](double t) {
      if (t <= 0.0) return m[0];
      if (t >= T) return m[steps];
      const std::size_t k = std::min(steps - 1, static_cast<std::size_t>(t / dt));
      const double u = (t - grid[k]) / (grid[k + 1] - grid[k]);
      return m[k] + u * (m[k + 1] - m[k]);
    };
    std::vector<std::vector<double>> disp(particles, std::vector<double>(steps + 1));
    bool overflow = false;
#pragma omp parallel for schedule(dynamic, 64) reduction(|| : overflow)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(particles); ++i) {
      Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(it)), static_cast<std::uint64_t>(i)));
      TaggedOptions opt;
      opt.record_path = true;
      TaggedPath p = tagged_particle(m_path, y0[i], model, T, rng, opt);
      overflow = overflow || p.overflow;
      for (std::size_t k = 0; k <= steps; ++k) disp[i][k] = position_at(p, grid[k]) - y0[i];
    }
    std::vector<double> next(steps + 1, 0.0);
    for (std::size_t k = 0; k <= steps; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < particles; ++i) acc += disp[i][k];
      next[k] = m0 + acc / static_cast<double>(particles);
      if (k > 0) next[k] = std::max(next[k], next[k - 1]);
    }
    double change = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) change = std::max(change, std::fabs(next[k] - m[k]));
    m = next;
    dump(it);
    std::printf("iter %d  sup change %.3e  m(T) %.6f%s\n", it, change, m[steps], overflow ? "  [overflow]" : "");
    converged = change < tol;
  }
  if (init == "nu_star" && beta <= gamma)
    std::printf("wave reference m(T) = %.6f\n", m0 + GumbelFixedPoint(beta, gamma).speed() * T);
  std::printf("%s\n", converged ? "converged" : "not converged (Monte Carlo noise floor or divergence)");
  return converged ? 0 : 4;
}
