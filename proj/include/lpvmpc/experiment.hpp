#pragma once

/**
 * @file
 * @brief Experiment plumbing behind the command-line runner: run specs and
 * their JSON config form, per-step CSV logs, summaries, comparison reports
 * and the self-test suite.
 */

#include "lpvmpc/sim.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpvmpc {

/// Bad user input (unknown names, out-of-range overrides, malformed config).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunSpec {
  std::string benchmark{"vanderpol"};
  std::string controller{"lpv-sqp"};
  std::optional<int> horizon;
  std::optional<int> steps;
  std::optional<double> step_tol;
  std::optional<double> schedule_tol;
  std::optional<int> max_iterations;
  InitMode init_mode{InitMode::zero};
  int repeat{1};
  std::string output_dir;        // empty: $LPVMPC_OUTPUT_DIR, else "results"
  std::uint64_t seed{1};         // randomized self-test utilities only
  std::string vanderpol_embedding{"rk4_exact"};
  BicycleParams bicycle;

  /// Throws UsageError when a name or override is invalid.
  void validate() const;
};

/// Overlays the keys present in `config` onto `base`. Unknown keys are errors.
[[nodiscard]] RunSpec run_spec_from_json(const nlohmann::json& config, RunSpec base = {});
[[nodiscard]] nlohmann::json to_json(const RunSpec& spec);

/// Scenario with the spec's overrides applied (horizon, steps, parameters).
[[nodiscard]] BenchmarkScenario scenario_for(const RunSpec& spec);
[[nodiscard]] SqpSettings settings_for(const RunSpec& spec);
[[nodiscard]] std::string resolve_output_dir(const RunSpec& spec);

struct RunSummary {
  double total_cost{0.0};
  double tau_mean{0.0};
  double tau_std{0.0};
  double tau_max{0.0};
  double mean_sqp_iterations{0.0};
  double mean_qp_iterations{0.0};
  SqpStatus worst_status{SqpStatus::converged};
  double converged_fraction{0.0};
  int steps{0};
  bool truncated{false};
};

[[nodiscard]] RunSummary summarize(const ClosedLoopLog& log);
[[nodiscard]] nlohmann::json to_json(const RunSummary& summary);

struct ExperimentResult {
  RunSpec spec;
  ClosedLoopLog log;     // first repeat
  RunSummary summary;    // timing pooled over all repeats
  int repeats_matching{0};  // repeats whose trajectory equals the first
};

/// Runs the spec `repeat` times. Trajectories of all repeats are compared
/// against the first; timing statistics pool every step of every repeat.
[[nodiscard]] ExperimentResult run_experiment(const RunSpec& spec);

/// Empty when the run is healthy, else a message naming the failing step.
/// A run fails when it was truncated or fewer than half its steps converged.
[[nodiscard]] std::string failure_message(const ExperimentResult& result);

void write_log_csv(std::ostream& out, const ClosedLoopLog& log);
/// Inverse of write_log_csv. Throws std::runtime_error on malformed input.
[[nodiscard]] ClosedLoopLog read_log_csv(std::istream& in);

/// File stem "<benchmark>_<controller>".
[[nodiscard]] std::string run_stem(const RunSpec& spec);

struct WrittenFiles {
  std::string csv;
  std::string summary;
};

/// Writes the CSV log and summary JSON under the spec's output directory.
WrittenFiles write_experiment(const ExperimentResult& result);

/// Comparison against the first result. Throws UsageError when benchmarks differ.
[[nodiscard]] nlohmann::json compare_results(const std::vector<ExperimentResult>& results);
/// Plain-text table of a comparison, numbers rounded to 4 decimals.
[[nodiscard]] std::string format_comparison(const nlohmann::json& report);

struct SelfTestCheck {
  std::string name;
  bool pass{false};
  std::string detail;
};

/// Invariant checks over the library (QP KKT certificates, embedding
/// exactness, recovery, cross-form agreement, Jacobians, CSV round trip).
[[nodiscard]] std::vector<SelfTestCheck> run_selftest(std::uint64_t seed = 1);

}  // namespace lpvmpc
