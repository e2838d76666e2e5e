#include "curvlab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace curvlab {

Dataset build_dataset(const ExperimentConfig& config) {
    Dataset raw;
    if (config.dataset == DatasetSource::idx) {
        raw = load_idx(config.images_path, config.labels_path);
    } else {
        RandomStream rng(config.data_seed, stream_label("data/synthetic"));
        raw = synthetic_dataset(config.synthetic_classes, config.synthetic_per_class,
                                config.synthetic_dim, rng);
    }
    RandomStream rng(config.data_seed, stream_label("data/subset"));
    Dataset out = subset_and_project(raw, std::min(config.subset_size, raw.size()),
                                     config.projection_dim, rng);
    out.validate();
    return out;
}

std::vector<std::size_t> network_layout(const ExperimentConfig& config, const Dataset& data) {
    std::vector<std::size_t> layout{data.dim()};
    layout.insert(layout.end(), config.hidden_widths.begin(), config.hidden_widths.end());
    layout.push_back(static_cast<std::size_t>(data.num_classes));
    return layout;
}

std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string csv_header(const OracleFlags& oracles) {
    std::string h =
        "seed,task,task_end_error,task_end_loss,avg_online_error,hessian_erank_rel,"
        "feature_erank_rel,update_norm_l1_avg,weight_norm_l1,dormancy_negentropy,grad_overlap,"
        "dist_init_l2,dist_init_w2";
    if (oracles.fisher) h += ",fisher_erank_rel";
    if (oracles.gauss_newton) h += ",gauss_newton_erank_rel";
    if (oracles.exact) h += ",exact_erank_rel";
    return h;
}

std::string csv_row(std::uint64_t seed, const DiagnosticsRecord& r, const OracleFlags& oracles) {
    std::string row = std::to_string(seed) + "," + std::to_string(r.task);
    for (double v : {r.task_end_error, r.task_end_loss, r.avg_online_error, r.hessian_relative_erank,
                     r.feature_relative_erank, r.avg_update_norm_l1, r.weight_norm_l1,
                     r.dormancy_negentropy, r.grad_overlap, r.dist_init_l2, r.dist_init_w2}) {
        row += "," + format_float(v);
    }
    if (oracles.fisher) row += "," + format_float(r.fisher_relative_erank.value_or(NAN));
    if (oracles.gauss_newton) row += "," + format_float(r.gauss_newton_relative_erank.value_or(NAN));
    if (oracles.exact) row += "," + format_float(r.exact_relative_erank.value_or(NAN));
    return row;
}

void write_csv(const std::filesystem::path& path, std::uint64_t seed,
               std::span<const DiagnosticsRecord> records, const OracleFlags& oracles, bool append) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write CSV '" + path.string() + "'");
    if (!append) out << csv_header(oracles) << '\n';
    for (const auto& r : records) out << csv_row(seed, r, oracles) << '\n';
    if (!out) throw std::runtime_error("failed writing CSV '" + path.string() + "'");
}

namespace {

struct ProbeBatch {
    Matrix x;
    std::vector<int> labels;
};

ProbeBatch make_probe(const Dataset& view, const ExperimentConfig& config, std::uint64_t task) {
    const auto idx = sample_indices(view.size(), config.probe_batch,
                                    RandomStream(config.seed, stream_label("run/probe")).derive(task));
    Dataset sub = view.select(idx);
    return {std::move(sub.inputs), std::move(sub.labels)};
}

void measure_start_of_task(const ParamSet& params, const ExperimentConfig& config,
                           const ProbeBatch& probe, std::uint64_t task, DiagnosticsRecord& rec) {
    const auto curvature = probe_curvature(params, config.activation, probe.x, probe.labels);
    rec.hessian_relative_erank = curvature.empirical_fisher.relative;
    rec.grad_overlap = curvature.grad_overlap;
    if (config.oracles.fisher) {
        RandomStream rng = RandomStream(config.seed, stream_label("run/fisher")).derive(task);
        rec.fisher_relative_erank = fisher_rank(params, config.activation, probe.x, rng).relative;
    }
    if (config.oracles.gauss_newton) {
        rec.gauss_newton_relative_erank = gauss_newton_rank(params, config.activation, probe.x).relative;
    }
    if (config.oracles.exact) {
        const Matrix h = exact_hessian(params, config.activation, probe.x, probe.labels);
        rec.exact_relative_erank = symmetric_rank(h).relative;
    }
}

void measure_end_of_task(const ParamSet& params, const ExperimentConfig& config, const Dataset& view,
                         const ProbeBatch& probe, DiagnosticsRecord& rec) {
    const auto full = forward(params, config.activation, view.inputs);
    const auto le = loss_and_error(full.logits, view.labels);
    rec.task_end_error = le.error;
    rec.task_end_loss = le.loss;
    const auto fwd = forward(params, config.activation, probe.x);
    const Matrix& phi = fwd.cache.representation();
    rec.feature_relative_erank = feature_effective_rank(phi).relative;
    rec.dormancy_negentropy = dormancy_negentropy(phi);
    rec.weight_norm_l1 = weight_norm(params);
    const auto dist = dist_from_init(params);
    rec.dist_init_l2 = dist.l2;
    rec.dist_init_w2 = dist.w2;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const TaskCallback& on_task, bool write) {
    config.validate();
    const Dataset data = build_dataset(config);
    return run_experiment(config, data, on_task, write);
}

RunResult run_experiment(const ExperimentConfig& config, const Dataset& data,
                         const TaskCallback& on_task, bool write) {
    config.validate();
    if (config.batch_size > data.size()) {
        throw ConfigError("batch_size " + std::to_string(config.batch_size) + " exceeds dataset size " +
                          std::to_string(data.size()));
    }
    const TaskStream stream(std::make_shared<const Dataset>(data), config.stream, config.seed);

    RandomStream init_rng(config.seed, stream_label("run/init"));
    ParamSet params = init_glorot(network_layout(config, data), init_rng);
    AdamState adam(params.size(), config.adam);

    std::uint64_t start_task = 0;
    if (config.resume && std::filesystem::exists(config.checkpoint_path)) {
        Checkpoint ckpt = read_checkpoint(config.checkpoint_path);
        if (ckpt.params.size() != params.size()) {
            throw ConfigError("checkpoint has " + std::to_string(ckpt.params.size()) +
                              " parameters, config implies " + std::to_string(params.size()));
        }
        params.unflatten(ckpt.params);
        params.set_snapshot(ckpt.init);
        adam.restore(std::move(ckpt.m), std::move(ckpt.v), ckpt.adam_step);
        start_task = ckpt.next_task;
    }
    if (write && start_task == 0) write_csv(config.output, config.seed, {}, config.oracles, false);

    RunResult result{config, {}, {}};
    const RandomStream batch_root(config.seed, stream_label("run/batches"));
    std::vector<double> gradient;

    for (std::uint64_t task = start_task; task < config.num_tasks; ++task) {
        const auto started = std::chrono::steady_clock::now();
        const Dataset view = stream.task_view(task);
        const ProbeBatch probe = make_probe(view, config, task);

        DiagnosticsRecord rec;
        rec.task = task;
        if (config.reset_adam && task > 0) adam.reset();
        measure_start_of_task(params, config, probe, task, rec);

        const RandomStream task_batches = batch_root.derive(task);
        double online_error_sum = 0.0;
        double update_norm_sum = 0.0;
        std::size_t steps = 0;
        for (std::uint64_t epoch = 0; epoch < config.epochs_per_task; ++epoch) {
            for (const auto& idx : minibatches(view.size(), config.batch_size, epoch, task_batches)) {
                const Dataset batch = view.select(idx);
                const auto fwd = forward(params, config.activation, batch.inputs);
                const auto le = loss_and_error(fwd.logits, batch.labels);
                if (!std::isfinite(le.loss)) {
                    throw NumericalError("non-finite loss at task " + std::to_string(task) + ", step " +
                                         std::to_string(steps));
                }
                online_error_sum += le.error;
                const auto deltas = backprop_deltas(params, config.activation, fwd.cache,
                                                    output_residuals(fwd.logits, batch.labels));
                gradient = accumulate_gradient(params, fwd.cache, deltas,
                                               1.0 / static_cast<double>(batch.size()));
                add_regularizer_gradient(config.regularizer, params, config.activation, fwd.cache,
                                         gradient);
                const auto delta = adam_step(adam, params, gradient);
                update_norm_sum += l1_norm(delta);
                ++steps;
            }
        }
        rec.avg_online_error = online_error_sum / static_cast<double>(steps);
        rec.avg_update_norm_l1 = update_norm_sum / static_cast<double>(steps);
        measure_end_of_task(params, config, view, probe, rec);
        if (!std::isfinite(rec.task_end_loss)) {
            throw NumericalError("non-finite task-end loss at task " + std::to_string(task));
        }

        if (write) write_csv(config.output, config.seed, std::span(&rec, 1), config.oracles, true);
        if (!config.checkpoint_path.empty()) {
            const auto m = adam.first_moment();
            const auto v = adam.second_moment();
            write_checkpoint(config.checkpoint_path,
                             {task + 1, adam.hyper(), adam.step(), params.flatten(),
                              std::vector<double>(params.init_snapshot().begin(), params.init_snapshot().end()),
                              std::vector<double>(m.begin(), m.end()),
                              std::vector<double>(v.begin(), v.end())});
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.records.push_back(rec);
        result.wall_seconds.push_back(seconds);
        if (on_task) on_task(rec, seconds);
    }
    return result;
}

double final_tasks_mean_error(std::span<const DiagnosticsRecord> records, std::size_t last) {
    if (records.empty()) return NAN;
    const std::size_t n = std::min(last, records.size());
    double s = 0.0;
    for (std::size_t i = records.size() - n; i < records.size(); ++i) s += records[i].task_end_error;
    return s / static_cast<double>(n);
}

SweepResult run_sweep(const ExperimentConfig& base, std::span<const RegularizerKind> regularizers,
                      std::span<const double> strengths, std::span<const std::uint64_t> seeds,
                      const std::filesystem::path& out_dir, unsigned jobs) {
    if (regularizers.empty() || strengths.empty() || seeds.empty()) {
        throw ConfigError("sweep grids must be nonempty");
    }
    std::filesystem::create_directories(out_dir);

    SweepResult result;
    std::vector<std::pair<RegularizerKind, double>> grid;
    for (auto kind : regularizers) {
        if (kind == RegularizerKind::none) {
            grid.emplace_back(kind, 0.0);
            continue;
        }
        for (double s : strengths) grid.emplace_back(kind, s);
    }
    for (const auto& [kind, strength] : grid) {
        for (auto seed : seeds) {
            SweepCell cell{kind, strength, seed, {}, false, {}, 0.0};
            cell.csv = out_dir / ("run_" + std::string(to_string(kind)) + "_s" + format_float(strength) +
                                  "_seed" + std::to_string(seed) + ".csv");
            result.cells.push_back(std::move(cell));
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < result.cells.size(); i = next++) {
            SweepCell& cell = result.cells[i];
            ExperimentConfig cfg = base;
            cfg.regularizer = {cell.regularizer, cell.strength};
            cfg.seed = cell.seed;
            cfg.output = cell.csv;
            cfg.checkpoint_path.clear();
            cfg.resume = false;
            try {
                const auto run = run_experiment(cfg);
                cell.final10_mean_error = final_tasks_mean_error(run.records);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const unsigned n = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(result.cells.size())));
        for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
        worker();
    }

    for (const auto& [kind, strength] : grid) {
        SweepSummaryRow row{kind, strength, 0, 0, 0.0, {}};
        for (const auto& cell : result.cells) {
            if (cell.regularizer != kind || cell.strength != strength) continue;
            if (cell.ok) {
                ++row.seeds_ok;
                row.final10_mean_error += cell.final10_mean_error;
            } else {
                ++row.seeds_failed;
                if (!row.errors.empty()) row.errors += " | ";
                row.errors += "seed " + std::to_string(cell.seed) + ": " + cell.error;
            }
        }
        row.final10_mean_error = row.seeds_ok > 0 ? row.final10_mean_error / static_cast<double>(row.seeds_ok) : NAN;
        result.summary.push_back(std::move(row));
    }

    std::ofstream summary(out_dir / "summary.csv");
    if (!summary) throw std::runtime_error("cannot write sweep summary in '" + out_dir.string() + "'");
    summary << "regularizer,strength,seeds_ok,seeds_failed,final10_mean_task_end_error,errors\n";
    for (const auto& row : result.summary) {
        std::string errors = row.errors;
        std::replace(errors.begin(), errors.end(), ',', ';');
        std::replace(errors.begin(), errors.end(), '\n', ' ');
        summary << to_string(row.regularizer) << ',' << format_float(row.strength) << ','
                << row.seeds_ok << ',' << row.seeds_failed << ',' << format_float(row.final10_mean_error)
                << ',' << errors << '\n';
    }
    return result;
}

std::vector<HessianValidationRow> validate_hessian_approx(const ExperimentConfig& config,
                                                          const std::filesystem::path& output,
                                                          const TaskCallback& on_task) {
    ExperimentConfig cfg = config;
    cfg.oracles = {true, true, true};
    cfg.checkpoint_path.clear();
    cfg.resume = false;
    const Dataset data = build_dataset(cfg);
    const std::size_t d = ParamSet(network_layout(cfg, data)).size();
    if (d > kDenseCurvatureLimit) {
        throw ConfigError("validate-hessian needs at most " + std::to_string(kDenseCurvatureLimit) +
                          " parameters, this network has " + std::to_string(d));
    }
    const auto run = run_experiment(cfg, data, on_task, false);

    std::vector<HessianValidationRow> rows;
    for (const auto& r : run.records) {
        rows.push_back({r.task, r.task_end_error, r.exact_relative_erank.value_or(NAN),
                        r.hessian_relative_erank, r.fisher_relative_erank.value_or(NAN),
                        r.gauss_newton_relative_erank.value_or(NAN)});
    }

    if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write '" + output.string() + "'");
    out << "seed,task,task_end_error,exact_erank_rel,empirical_fisher_erank_rel,fisher_erank_rel,"
           "gauss_newton_erank_rel,diff_empirical_fisher,diff_fisher,diff_gauss_newton\n";
    for (const auto& r : rows) {
        out << cfg.seed << ',' << r.task << ',' << format_float(r.task_end_error) << ','
            << format_float(r.exact) << ',' << format_float(r.empirical_fisher) << ','
            << format_float(r.fisher) << ',' << format_float(r.gauss_newton) << ','
            << format_float(std::abs(r.empirical_fisher - r.exact)) << ','
            << format_float(std::abs(r.fisher - r.exact)) << ','
            << format_float(std::abs(r.gauss_newton - r.exact)) << '\n';
    }
    return rows;
}

void make_fixtures(const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::uint8_t> pixels(2 * 16);
    for (std::size_t i = 0; i < 16; ++i) {
        pixels[i] = static_cast<std::uint8_t>(17 * i);
        pixels[16 + i] = static_cast<std::uint8_t>(255 - 17 * i);
    }
    const std::vector<std::uint8_t> labels{3, 7};
    write_idx(out_dir / "fixture-images-idx3-ubyte", out_dir / "fixture-labels-idx1-ubyte", pixels,
              labels, 4, 4);
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'L', 'C', 'K', 'P', 'T', '\0', '\0'};

void put_u64(std::ofstream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

void put_f64s(std::ofstream& out, std::span<const double> values) {
    for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64(std::ifstream& in, const std::filesystem::path& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("truncated checkpoint '" + path.string() + "'");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
}

std::vector<double> get_f64s(std::ifstream& in, std::size_t n, const std::filesystem::path& path) {
    std::vector<double> out(n);
    for (double& v : out) v = std::bit_cast<double>(get_u64(in, path));
    return out;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    const std::size_t d = c.params.size();
    if (c.init.size() != d || c.m.size() != d || c.v.size() != d) {
        throw ShapeError("checkpoint vectors must all have the parameter count");
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp.string() + "'");
        out.write(kCheckpointMagic, sizeof kCheckpointMagic);
        put_u64(out, kCheckpointVersion);
        put_u64(out, c.next_task);
        put_u64(out, d);
        put_u64(out, c.adam_step);
        put_f64s(out, std::vector<double>{c.hyper.lr, c.hyper.beta1, c.hyper.beta2, c.hyper.eps});
        put_f64s(out, c.params);
        put_f64s(out, c.init);
        put_f64s(out, c.m);
        put_f64s(out, c.v);
        if (!out) throw std::runtime_error("failed writing checkpoint '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
        throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
    }
    const std::uint64_t version = get_u64(in, path);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.next_task = get_u64(in, path);
    const std::uint64_t d = get_u64(in, path);
    c.adam_step = get_u64(in, path);
    const auto hyper = get_f64s(in, 4, path);
    c.hyper = {hyper[0], hyper[1], hyper[2], hyper[3]};
    c.params = get_f64s(in, d, path);
    c.init = get_f64s(in, d, path);
    c.m = get_f64s(in, d, path);
    c.v = get_f64s(in, d, path);
    return c;
}

}  // namespace curvlab
