// Selection kernels (Fenwick vs linear scan) and replica parallelism (serial vs OpenMP).
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "flockline/engine.hpp"
#include "flockline/random.hpp"

using namespace flockline;

namespace {

const Model kModel{RateSpec::exponential(1.0), JumpSpec::exponential(1.0)};

double seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double events_per_second(std::size_t n, SelectionPath path, std::uint64_t events) {
  SimConfig cfg;
  cfg.horizon = 1e12;
  cfg.seed = 99;
  cfg.event_budget = events;
  cfg.selection = path;
  auto st = init_state(n, InitSpec::nu_star(1.0, 1.0), 98);
  auto t0 = std::chrono::steady_clock::now();
  auto run = simulate(kModel, st, cfg);
  return double(run.event_count) / seconds(t0);
}

double replicas_wall(std::size_t replicas, std::size_t n, double T, int threads, double& checksum) {
  std::vector<double> m(replicas);
  auto t0 = std::chrono::steady_clock::now();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(replicas); ++r) {
    SimConfig cfg;
    cfg.horizon = T;
    cfg.seed = derive_seed(7, static_cast<std::uint64_t>(r));
    m[r] = simulate(kModel, init_state(n, InitSpec::nu_star(1.0, 1.0), derive_seed(8, r)), cfg).final_state.m;
  }
  const double wall = seconds(t0);
  checksum = 0.0;
  for (double v : m) checksum += v;
  return wall;
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
  std::printf("selection kernels (events/s)\n%8s %14s %14s %8s\n", "n", "fenwick", "linear", "speedup");
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    const double fast = events_per_second(n, SelectionPath::Fenwick, 500000);
    const double slow = events_per_second(n, SelectionPath::Linear, 400000000 / n);
    std::printf("%8zu %14.4g %14.4g %8.1f\n", n, fast, slow, fast / slow);
  }
  double c1 = 0.0, ck = 0.0;
  const double serial = replicas_wall(32, 1000, 20.0, 1, c1);
  const double parallel = replicas_wall(32, 1000, 20.0, threads, ck);
  std::printf("replicas (32 x n=1000, T=20): serial %.3fs, %d threads %.3fs, speedup %.2f, identical results: %s\n",
              serial, threads, parallel, serial / parallel, c1 == ck ? "yes" : "no");
  return c1 == ck ? 0 : 1;
}
