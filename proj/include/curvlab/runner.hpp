#pragma once

// Continual training loop, per-task diagnostics and their CSV output.
//
// For each task k the runner
//   1. builds the task view and a fixed probe batch,
//   2. measures start-of-task curvature on the probe batch before any update,
//   3. trains epochs_per_task epochs of minibatch Adam, recording the
//      pre-update minibatch error and the L1 norm of every update,
//   4. evaluates task-end error/loss on the whole task plus representation,
//      weight-norm and distance metrics,
// and appends one CSV row.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "curvlab/config.hpp"
#include "curvlab/diagnostics.hpp"
#include "curvlab/optim.hpp"

namespace curvlab {

/// Non-finite loss or another numerical breakdown during a run.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunResult {
    ExperimentConfig config;
    std::vector<DiagnosticsRecord> records;
    std::vector<double> wall_seconds;  // per task
};

/// Called after every task; used by the CLI for progress output.
using TaskCallback = std::function<void(const DiagnosticsRecord&, double seconds)>;

/// Loads or synthesizes the dataset, then applies subset and projection.
Dataset build_dataset(const ExperimentConfig& config);

/// Full layout: input width, hidden widths, class count.
std::vector<std::size_t> network_layout(const ExperimentConfig& config, const Dataset& data);

/// Runs the experiment and writes config.output (unless `write_csv` is off).
RunResult run_experiment(const ExperimentConfig& config, const TaskCallback& on_task = {},
                         bool write_csv = true);

/// Same, on an already-built dataset.
RunResult run_experiment(const ExperimentConfig& config, const Dataset& data,
                         const TaskCallback& on_task = {}, bool write_csv = true);

std::string csv_header(const OracleFlags& oracles);
std::string csv_row(std::uint64_t seed, const DiagnosticsRecord& r, const OracleFlags& oracles);
void write_csv(const std::filesystem::path& path, std::uint64_t seed,
               std::span<const DiagnosticsRecord> records, const OracleFlags& oracles,
               bool append = false);

/// "%.9g" formatting shared by every CSV writer.
std::string format_float(double v);

struct SweepCell {
    RegularizerKind regularizer;
    double strength;
    std::uint64_t seed;
    std::filesystem::path csv;
    bool ok = false;
    std::string error;
    double final10_mean_error = 0.0;
};

struct SweepSummaryRow {
    RegularizerKind regularizer;
    double strength;
    std::size_t seeds_ok = 0;
    std::size_t seeds_failed = 0;
    double final10_mean_error = 0.0;  // averaged over successful seeds
    std::string errors;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::vector<SweepSummaryRow> summary;
};

/// Mean task_end_error over the last min(10, n) tasks.
double final_tasks_mean_error(std::span<const DiagnosticsRecord> records, std::size_t last = 10);

/// One run per (regularizer, strength, seed); `none` ignores the strength
/// grid. Cells run on `jobs` worker threads and each writes its own CSV in
/// out_dir; summary.csv aggregates over seeds. A failing cell is recorded
/// and the remaining cells still run.
SweepResult run_sweep(const ExperimentConfig& base, std::span<const RegularizerKind> regularizers,
                      std::span<const double> strengths, std::span<const std::uint64_t> seeds,
                      const std::filesystem::path& out_dir, unsigned jobs = 1);

struct HessianValidationRow {
    std::size_t task = 0;
    double task_end_error = 0.0;
    double exact = 0.0;
    double empirical_fisher = 0.0;
    double fisher = 0.0;
    double gauss_newton = 0.0;
};

/// Runs with every oracle enabled and writes per-task relative eranks and
/// their absolute differences from the exact Hessian to `output`.
std::vector<HessianValidationRow> validate_hessian_approx(const ExperimentConfig& config,
                                                          const std::filesystem::path& output,
                                                          const TaskCallback& on_task = {});

/// Writes the 2-image 4x4 IDX pair used by the loader tests.
void make_fixtures(const std::filesystem::path& out_dir);

// Checkpoints: an 8-byte magic "CLCKPT\0\0", then little-endian uint64
// version (1), next_task, param_count, adam_step, followed by 64-bit
// little-endian floats: lr, beta1, beta2, eps, params, init snapshot, Adam
// first moments, Adam second moments.
inline constexpr std::uint64_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint64_t next_task = 0;
    AdamHyper hyper;
    std::uint64_t adam_step = 0;
    std::vector<double> params;
    std::vector<double> init;
    std::vector<double> m;
    std::vector<double> v;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace curvlab
