// curvlab: continual-learning curvature experiments from the command line.
//
//   curvlab run --config <path>
//   curvlab sweep --config <path> --regularizers <list> --strengths <list> --seeds <list>
//   curvlab validate-hessian --config <path> [--output <csv>]
//   curvlab make-fixtures [--out-dir <dir>]
//
// Exit codes: 0 success, 1 config error, 2 runtime or numerical failure.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curvlab/config.hpp"
#include "curvlab/runner.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void print_progress(const curvlab::DiagnosticsRecord& r, double seconds) {
    std::fprintf(stderr,
                 "task %3zu  end_err %.4f  online_err %.4f  hess_erank %.4f  feat_erank %.4f  "
                 "overlap %.3f  (%.1fs)\n",
                 r.task, r.task_end_error, r.avg_online_error, r.hessian_relative_erank,
                 r.feature_relative_erank, r.grad_overlap, seconds);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Loss-of-plasticity and curvature experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress per-task progress on stderr");

    auto* run = app.add_subcommand("run", "Run one continual-learning experiment");
    run->add_option("--config", config_path, "Config file")->required();

    std::string regularizers = "none";
    std::string strengths = "0.005,0.001,0.0005";
    std::string seeds = "0";
    std::string out_dir = "sweep";
    unsigned jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "Grid over regularizers, strengths and seeds");
    sweep->add_option("--config", config_path, "Base config file")->required();
    sweep->add_option("--regularizers", regularizers, "Comma list of regularizers");
    sweep->add_option("--strengths", strengths, "Comma list of strengths");
    sweep->add_option("--seeds", seeds, "Comma list of seeds");
    sweep->add_option("--out-dir", out_dir, "Directory for per-cell CSVs and summary.csv");
    sweep->add_option("--jobs", jobs, "Concurrent cells");

    std::string validation_output = "hessian_validation.csv";
    auto* validate = app.add_subcommand("validate-hessian",
                                        "Compare curvature-rank estimators with the exact Hessian");
    validate->add_option("--config", config_path, "Config file")->required();
    validate->add_option("--output", validation_output, "Output CSV");

    std::string fixture_dir = ".";
    auto* fixtures = app.add_subcommand("make-fixtures", "Write a tiny IDX image/label pair");
    fixtures->add_option("--out-dir", fixture_dir, "Destination directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    const curvlab::TaskCallback progress = quiet ? curvlab::TaskCallback{} : print_progress;
    try {
        if (*fixtures) {
            curvlab::make_fixtures(fixture_dir);
            std::cout << "wrote " << fixture_dir << "/fixture-images-idx3-ubyte and "
                      << fixture_dir << "/fixture-labels-idx1-ubyte\n";
            return 0;
        }

        curvlab::ExperimentConfig config;
        try {
            config = curvlab::parse_config_file(config_path);
        } catch (const curvlab::ConfigError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return kExitConfig;
        }

        if (*run) {
            const auto result = curvlab::run_experiment(config, progress);
            std::cout << "wrote " << config.output.string() << " (" << result.records.size()
                      << " tasks)\n";
        } else if (*sweep) {
            std::vector<curvlab::RegularizerKind> kinds;
            std::vector<double> strength_grid;
            std::vector<std::uint64_t> seed_grid;
            try {
                for (const auto& s : split(regularizers)) kinds.push_back(curvlab::parse_regularizer(s));
                for (const auto& s : split(strengths)) strength_grid.push_back(std::stod(s));
                for (const auto& s : split(seeds)) seed_grid.push_back(std::stoull(s));
            } catch (const std::exception& e) {
                std::cerr << "config error: bad sweep grid: " << e.what() << '\n';
                return kExitConfig;
            }
            const auto result = curvlab::run_sweep(config, kinds, strength_grid, seed_grid, out_dir, jobs);
            std::size_t failed = 0;
            for (const auto& cell : result.cells) failed += cell.ok ? 0 : 1;
            std::cout << "wrote " << out_dir << "/summary.csv (" << result.cells.size() << " cells, "
                      << failed << " failed)\n";
            if (failed == result.cells.size()) return kExitRuntime;
        } else if (*validate) {
            const auto rows = curvlab::validate_hessian_approx(config, validation_output, progress);
            std::cout << "wrote " << validation_output << " (" << rows.size() << " tasks)\n";
        }
    } catch (const curvlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
