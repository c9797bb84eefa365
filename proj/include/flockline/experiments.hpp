#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "flockline/config.hpp"

namespace flockline {

enum ExitCode : int { kExitOk = 0, kExitSchema = 1, kExitAssumption = 2, kExitTainted = 3 };

using Cell = std::variant<std::string, double, std::int64_t, std::uint64_t, bool>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void write_csv(std::ostream& os) const;
};

struct ExperimentOutput {
  Table results;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::pair<std::string, Table>> extra_files;  // file name, contents
  std::uint64_t overflow_runs = 0;
  std::uint64_t budget_runs = 0;

  bool tainted() const { return overflow_runs > 0 || budget_runs > 0; }
};

// Seed for replica r of system size n.
std::uint64_t replica_seed(std::uint64_t base, std::size_t n, std::size_t r);

// Runs the experiment in memory. jobs <= 0 keeps the OpenMP default.
ExperimentOutput execute(const ExperimentConfig& cfg, int jobs = 0);

struct RunOptions {
  std::string out_dir;  // empty: use the config's output_dir
  int jobs = 0;
  bool allow_unchecked = false;
};

// Full run: assumption gate, execution, results.csv / manifest.json / summary.json. Returns the exit code.
int run_experiment(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log);

std::string format_double(double v);

}  // namespace flockline
