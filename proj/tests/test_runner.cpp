#include <doctest.h>

#include <fstream>
#include <sstream>

#include "curvlab/runner.hpp"
#include "helpers.hpp"

using namespace curvlab;

namespace {

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream s(text);
    for (std::string line; std::getline(s, line);) out.push_back(line);
    return out;
}

ExperimentConfig tiny_config(const std::filesystem::path& out) {
    auto c = parse_config(
        "dataset = synthetic\nactivation = relu\nstream = random_label\n"
        "synthetic_per_class = 12\nsynthetic_dim = 10\nsubset_size = 100\n"
        "hidden_widths = 8,8\nnum_tasks = 3\nepochs_per_task = 4\nbatch_size = 32\nprobe_batch = 20\n");
    c.output = out;
    return c;
}

}  // namespace

TEST_CASE("CSV header and number formatting") {
    CHECK(csv_header({}) ==
          "seed,task,task_end_error,task_end_loss,avg_online_error,hessian_erank_rel,feature_erank_rel,"
          "update_norm_l1_avg,weight_norm_l1,dormancy_negentropy,grad_overlap,dist_init_l2,dist_init_w2");
    CHECK(csv_header({true, true, true}).ends_with(
        ",dist_init_w2,fisher_erank_rel,gauss_newton_erank_rel,exact_erank_rel"));
    CHECK(csv_header({false, false, true}).ends_with(",dist_init_w2,exact_erank_rel"));
    CHECK(format_float(0.1) == "0.1");
    CHECK(format_float(1.0 / 3.0) == "0.333333333");
    CHECK(format_float(12345678912.0) == "1.23456789e+10");
}

TEST_CASE("a tiny run writes one row per task and is reproducible") {
    const auto dir = testing::scratch_dir("run");
    const auto a = run_experiment(tiny_config(dir / "a.csv"));
    run_experiment(tiny_config(dir / "b.csv"));
    const std::string text = read_text(dir / "a.csv");
    CHECK(text == read_text(dir / "b.csv"));

    const auto lines = lines_of(text);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == csv_header({}));
    CHECK(lines[1].starts_with("0,0,"));
    CHECK(lines[3].starts_with("0,2,"));
    REQUIRE(a.records.size() == 3);
    for (const auto& r : a.records) {
        CHECK(r.task_end_error >= 0.0);
        CHECK(r.task_end_error <= 1.0);
        CHECK(r.grad_overlap >= 0.0);
        CHECK(r.grad_overlap <= 1.0);
        CHECK(r.hessian_relative_erank > 0.0);
        CHECK(r.hessian_relative_erank <= 1.0);
        CHECK(r.dist_init_w2 <= r.dist_init_l2);
        CHECK(r.avg_update_norm_l1 > 0.0);
    }
    // Nothing has moved before the first update, and the start-of-task probe
    // of task 0 sees the initialization.
    CHECK(a.records[0].dist_init_l2 > 0.0);

    auto other_seed = tiny_config(dir / "c.csv");
    other_seed.seed = 1;
    run_experiment(other_seed);
    CHECK(read_text(dir / "c.csv") != text);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
    const auto dir = testing::scratch_dir("resume");
    run_experiment(tiny_config(dir / "full.csv"));

    auto first = tiny_config(dir / "split.csv");
    first.num_tasks = 2;
    first.checkpoint_path = dir / "run.ckpt";
    run_experiment(first);
    const auto ckpt = read_checkpoint(dir / "run.ckpt");
    CHECK(ckpt.next_task == 2);
    CHECK(ckpt.adam_step == 2 * 4 * 4);

    auto second = tiny_config(dir / "split.csv");
    second.checkpoint_path = dir / "run.ckpt";
    second.resume = true;
    const auto rest = run_experiment(second);
    CHECK(rest.records.size() == 1);
    CHECK(read_text(dir / "split.csv") == read_text(dir / "full.csv"));
}

TEST_CASE("checkpoint format") {
    const auto dir = testing::scratch_dir("ckpt");
    Checkpoint c{5, {2e-3, 0.8, 0.99, 1e-7}, 17, {1.5, -2}, {0, 1}, {0.25, 0.5}, {1e-9, 4}};
    write_checkpoint(dir / "x.ckpt", c);
    const std::string bytes = read_text(dir / "x.ckpt");
    REQUIRE(bytes.size() == 8 + 4 * 8 + 4 * 8 + 4 * 2 * 8);
    CHECK(bytes.substr(0, 6) == "CLCKPT");
    CHECK(bytes[8] == 1);  // version, little-endian
    CHECK(bytes[16] == 5);

    const auto back = read_checkpoint(dir / "x.ckpt");
    CHECK(back.next_task == 5);
    CHECK(back.adam_step == 17);
    CHECK(back.hyper.lr == 2e-3);
    CHECK(back.hyper.eps == 1e-7);
    CHECK(back.params == c.params);
    CHECK(back.init == c.init);
    CHECK(back.m == c.m);
    CHECK(back.v == c.v);

    {
        std::ofstream out(dir / "short.ckpt", std::ios::binary);
        out << bytes.substr(0, 60);
    }
    CHECK_THROWS_AS(read_checkpoint(dir / "short.ckpt"), std::runtime_error);
    {
        std::ofstream out(dir / "junk.ckpt", std::ios::binary);
        out << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(read_checkpoint(dir / "junk.ckpt"), std::runtime_error);
    {
        std::string v2 = bytes;
        v2[8] = 2;
        std::ofstream out(dir / "v2.ckpt", std::ios::binary);
        out << v2;
    }
    CHECK_THROWS_WITH_AS(read_checkpoint(dir / "v2.ckpt"), "unsupported checkpoint version 2",
                         std::runtime_error);
    c.m.pop_back();
    CHECK_THROWS_AS(write_checkpoint(dir / "bad.ckpt", c), ShapeError);
}

TEST_CASE("sweeps") {
    const auto dir = testing::scratch_dir("sweep");
    const auto base = tiny_config(dir / "unused.csv");
    const RegularizerKind kinds[] = {RegularizerKind::none, RegularizerKind::wasserstein};
    // The negative strength is rejected per cell; the other cells still run.
    const double strengths[] = {0.001, -1.0};
    const std::uint64_t seeds[] = {0, 1};
    const auto result = run_sweep(base, kinds, strengths, seeds, dir / "out", 2);
    REQUIRE(result.cells.size() == 6);
    REQUIRE(result.summary.size() == 3);
    CHECK(result.summary[0].seeds_ok == 2);
    CHECK(result.summary[1].seeds_ok == 2);
    CHECK(result.summary[2].seeds_failed == 2);
    CHECK(result.summary[2].errors.find("nonnegative") != std::string::npos);

    // A cell's CSV equals a standalone run with the same settings.
    run_experiment(tiny_config(dir / "single.csv"));
    CHECK(read_text(dir / "out" / "run_none_s0_seed0.csv") == read_text(dir / "single.csv"));

    const auto summary = lines_of(read_text(dir / "out" / "summary.csv"));
    REQUIRE(summary.size() == 4);
    CHECK(summary[0] == "regularizer,strength,seeds_ok,seeds_failed,final10_mean_task_end_error,errors");
    CHECK(summary[1].starts_with("none,0,2,0,"));
    CHECK(summary[3].starts_with("wasserstein,-1,0,2,nan,seed 0: "));

    // Order of execution does not matter.
    const auto serial = run_sweep(base, kinds, strengths, seeds, dir / "serial", 1);
    CHECK(read_text(dir / "serial" / "summary.csv") == read_text(dir / "out" / "summary.csv"));
    CHECK_THROWS_AS(run_sweep(base, {}, strengths, seeds, dir / "empty", 1), ConfigError);
}

TEST_CASE("final-task error average") {
    std::vector<DiagnosticsRecord> recs(12);
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].task_end_error = static_cast<double>(i);
    CHECK(final_tasks_mean_error(recs) == doctest::Approx(6.5));
    CHECK(final_tasks_mean_error(std::span(recs).first(4)) == doctest::Approx(1.5));
}

TEST_CASE("Hessian validation on a tiny projected network") {
    const auto dir = testing::scratch_dir("validate");
    auto c = parse_config(
        "dataset = synthetic\nactivation = leaky_relu\nstream = random_label\n"
        "synthetic_per_class = 10\nsynthetic_dim = 20\nsubset_size = 60\nprojection_dim = 6\n"
        "hidden_widths = 5,5\nnum_tasks = 2\nepochs_per_task = 3\nbatch_size = 20\nprobe_batch = 30\n");
    const auto rows = validate_hessian_approx(c, dir / "v.csv");
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.exact > 0.0);
        CHECK(r.exact <= 1.0);
        CHECK(r.gauss_newton > 0.0);
        CHECK(r.fisher > 0.0);
    }
    const auto lines = lines_of(read_text(dir / "v.csv"));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] ==
          "seed,task,task_end_error,exact_erank_rel,empirical_fisher_erank_rel,fisher_erank_rel,"
          "gauss_newton_erank_rel,diff_empirical_fisher,diff_fisher,diff_gauss_newton");

    c.projection_dim = 0;
    c.synthetic_dim = 784;
    c.hidden_widths = {64};
    CHECK_THROWS_AS(validate_hessian_approx(c, dir / "big.csv"), ConfigError);
}

TEST_CASE("a single stationary task is learned") {
    const auto dir = testing::scratch_dir("stationary");
    for (auto act : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::identity}) {
        auto c = parse_config(
            "dataset = synthetic\nactivation = relu\nstream = stationary\n"
            "synthetic_dim = 64\nhidden_widths = 64,64\nnum_tasks = 1\nepochs_per_task = 100\n");
        c.activation = act;
        c.output = dir / "s.csv";
        const auto run = run_experiment(c);
        CAPTURE(to_string(act));
        CHECK(run.records[0].task_end_error < 0.02);
    }
}

TEST_CASE("batch larger than the dataset is a config error") {
    auto c = tiny_config(testing::scratch_dir("batch") / "x.csv");
    c.batch_size = 101;
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
}
