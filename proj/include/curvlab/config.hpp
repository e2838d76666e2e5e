#pragma once

// Experiment configuration: a flat `key = value` text file, one pair per
// line, '#' starts a comment. Keys and their defaults:
//
//   dataset              synthetic | idx                        (required)
//   activation           relu | leaky_relu | tanh | identity    (required)
//   stream               random_label | permuted_pixels | stationary (required)
//   images_path, labels_path   IDX files when dataset = idx
//   synthetic_classes    10
//   synthetic_per_class  128
//   synthetic_dim        784
//   data_seed            0      seeds dataset synthesis, subset and projection
//   subset_size          1280   0 keeps the whole dataset
//   projection_dim       0      0 disables the random projection
//   num_tasks            30
//   epochs_per_task      200
//   batch_size           256
//   hidden_widths        256,256,256
//   lr, beta1, beta2, eps  1e-3, 0.9, 0.999, 1e-8
//   reset_adam           false  clear Adam moments at every task boundary
//   regularizer          none | weight_decay | regenerative | wasserstein | feature_rank
//   strength             0
//   seed                 0      master seed for init, labels, batches, probes
//   probe_batch          256
//   oracles              comma list of fisher, gauss_newton, exact (empty)
//   output               results.csv
//   checkpoint_path      empty: no checkpoints
//   resume               false  continue from checkpoint_path if it exists
//
// Enumerated values are case-insensitive. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "curvlab/network.hpp"
#include "curvlab/optim.hpp"
#include "curvlab/tasks.hpp"

namespace curvlab {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DatasetSource { synthetic, idx };

struct OracleFlags {
    bool fisher = false;
    bool gauss_newton = false;
    bool exact = false;

    bool any() const noexcept { return fisher || gauss_newton || exact; }
};

struct ExperimentConfig {
    DatasetSource dataset = DatasetSource::synthetic;
    std::filesystem::path images_path;
    std::filesystem::path labels_path;
    int synthetic_classes = 10;
    std::size_t synthetic_per_class = 128;
    std::size_t synthetic_dim = 784;
    std::uint64_t data_seed = 0;
    std::size_t subset_size = 1280;
    std::size_t projection_dim = 0;

    StreamKind stream = StreamKind::random_label;
    std::size_t num_tasks = 30;
    std::size_t epochs_per_task = 200;
    std::size_t batch_size = 256;
    std::vector<std::size_t> hidden_widths{256, 256, 256};
    Activation activation = Activation::relu;
    AdamHyper adam;
    bool reset_adam = false;
    RegularizerSpec regularizer;
    std::uint64_t seed = 0;
    std::size_t probe_batch = 256;
    OracleFlags oracles;
    std::filesystem::path output = "results.csv";
    std::filesystem::path checkpoint_path;
    bool resume = false;

    /// Throws ConfigError for nonpositive counts or inconsistent settings.
    void validate() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// Serializes every key, so parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const ExperimentConfig& config);

}  // namespace curvlab
