#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpest/estimators.hpp"

namespace cpest {

enum class OutputFormat { csv, json };

enum class MethodSelect { mc, fdmc, both };

/// Sampling configuration: the MC baseline always checks N equitime steps;
/// the FDMC plan starts from N_ed points produced by `mode`.
struct SamplingConfig {
  PlanMode mode = PlanMode::equidistant_rootsolve;
  int N = 5000;
  int N_ed = 200;
};

/// Fully resolved benchmark configuration (defaults applied at parse time).
struct Scenario {
  double horizon_s = 0;
  double vehicle_radius_m = 0;
  VehicleModel model;
  std::vector<ObstacleTrack> obstacles;
  long long trials = 100000;
  SamplingConfig sampling;
  double filter_alpha = 0;
  double confidence = 0.95;
  std::uint64_t seed = 1;
};

/// Parses and validates a scenario JSON document. Error messages name the
/// offending field; malformed JSON reports the parser's line/column.
Scenario parse_scenario(const std::string& text);

/// Reads the file and parses it.
Scenario load_scenario(const std::filesystem::path& file);

/// Stable hash of the resolved scenario: key order does not matter, any
/// numeric field change does.
std::string scenario_hash(const Scenario& sc);

/// Benchmark output for one scenario.
struct RunReport {
  std::string scenario_hash;
  std::optional<EstimateResult> mc;
  std::optional<EstimateResult> fdmc;
  /// Maximal runs of consecutive pre-filter plan times kept by the filter.
  std::vector<std::pair<double, double>> retained_intervals;
  double speedup = 0;  // MC wall time over FDMC wall time when both ran
};

struct RunOptions {
  int workers = 0;  // 0 = hardware concurrency
};

/**
 * @brief Runs the requested estimators end to end.
 *
 * The MC phase covers propagation over the N equitime steps; the FDMC phase
 * covers plan construction, importance filtering, FDD construction and
 * estimation. Each phase is timed separately (parsing is excluded by
 * construction) and the ratio is reported as `speedup`.
 */
RunReport run_benchmark(const Scenario& sc, MethodSelect methods,
                        const RunOptions& opt = {});

/// Writes the report as CSV rows (fixed column set) or as a lossless JSON
/// mirror of RunReport.
void emit_results(const RunReport& report, OutputFormat format,
                  std::ostream& out);
void emit_results(const RunReport& report, OutputFormat format,
                  const std::filesystem::path& file);

/// Inverse of the JSON emitter (round-trip support).
RunReport parse_report_json(const std::string& text);

/**
 * @brief Writes plot-ready CSV series into `dir`.
 *
 * trajectory.csv: expected position on a fine time grid;
 * obstacles.csv: obstacle tracks on the same grid;
 * intervals.csv: retained intervals from the report;
 * sampling_comparison.csv: expected dominant-axis position at equitime vs
 * equidistant plan times.
 */
void emit_plot_data(const Scenario& sc, const RunReport& report,
                    const std::filesystem::path& dir);

const char* method_name(Method m);
const char* plan_mode_name(PlanMode m);

}  // namespace cpest
