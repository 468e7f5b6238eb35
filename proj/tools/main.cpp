#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cpest/scenario.hpp"

namespace {

int run_estimate(const std::string& scenario_file, const std::string& method,
                 long long trials, std::int64_t seed, const std::string& out,
                 const std::string& plot_dir, const std::string& format,
                 int workers) {
  cpest::Scenario sc = cpest::load_scenario(scenario_file);
  if (trials > 0) sc.trials = trials;
  if (seed >= 0) sc.seed = std::uint64_t(seed);

  cpest::MethodSelect select = cpest::MethodSelect::both;
  if (method == "mc") select = cpest::MethodSelect::mc;
  if (method == "fdmc") select = cpest::MethodSelect::fdmc;

  cpest::RunOptions opt;
  opt.workers = workers;
  const cpest::RunReport report = cpest::run_benchmark(sc, select, opt);

  const cpest::OutputFormat fmt = format == "json" ? cpest::OutputFormat::json
                                                   : cpest::OutputFormat::csv;
  if (out.empty())
    cpest::emit_results(report, fmt, std::cout);
  else
    cpest::emit_results(report, fmt, std::filesystem::path(out));
  if (!plot_dir.empty())
    cpest::emit_plot_data(sc, report, std::filesystem::path(plot_dir));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collision probability estimation for linear stochastic "
               "vehicle dynamics"};
  app.require_subcommand(1);

  std::string scenario_file;
  std::string method = "both";
  long long trials = 0;
  std::int64_t seed = -1;
  std::string out;
  std::string plot_dir;
  std::string format = "csv";
  int workers = 0;

  CLI::App* est = app.add_subcommand(
      "estimate", "Run the MC / FDMC estimators on a scenario file");
  est->add_option("scenario", scenario_file, "Scenario JSON file")->required();
  est->add_option("--method", method, "Estimator selection")
      ->check(CLI::IsMember({"mc", "fdmc", "both"}));
  est->add_option("--trials", trials, "Override the scenario trial count")
      ->check(CLI::PositiveNumber);
  est->add_option("--seed", seed, "Override the scenario seed")
      ->check(CLI::NonNegativeNumber);
  est->add_option("--out", out, "Write results to this file (default stdout)");
  est->add_option("--plot-data", plot_dir,
                  "Write figure-reproduction CSV series into this directory");
  est->add_option("--format", format, "Result format")
      ->check(CLI::IsMember({"csv", "json"}));
  est->add_option("--workers", workers,
                  "Worker threads (0 = hardware concurrency)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return run_estimate(scenario_file, method, trials, seed, out, plot_dir,
                        format, workers);
  } catch (const cpest::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const cpest::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const cpest::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
