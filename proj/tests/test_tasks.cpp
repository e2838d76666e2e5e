#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "curvlab/optim.hpp"
#include "curvlab/runner.hpp"
#include "curvlab/tasks.hpp"
#include "helpers.hpp"

using namespace curvlab;

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string error_of(const std::filesystem::path& img, const std::filesystem::path& lab) {
    try {
        load_idx(img, lab);
    } catch (const IdxError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("IDX fixture round-trips") {
    const auto dir = testing::scratch_dir("idx");
    make_fixtures(dir);
    const auto img = dir / "fixture-images-idx3-ubyte";
    const auto lab = dir / "fixture-labels-idx1-ubyte";

    const auto bytes = slurp(img);
    REQUIRE(bytes.size() == 16 + 32);
    CHECK(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 16) ==
          std::vector<std::uint8_t>{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0, 4});
    CHECK(slurp(lab) == std::vector<std::uint8_t>{0, 0, 8, 1, 0, 0, 0, 2, 3, 7});

    const Dataset ds = load_idx(img, lab);
    CHECK(ds.inputs.rows() == 2);
    CHECK(ds.inputs.cols() == 16);
    CHECK(ds.labels == std::vector<int>{3, 7});
    CHECK(ds.num_classes == 8);
    CHECK(ds.inputs(0, 0) == 0.0);
    CHECK(ds.inputs(0, 15) == 1.0);  // byte 255
    CHECK(ds.inputs(0, 1) == doctest::Approx(17.0 / 255));
    CHECK(ds.inputs(1, 0) == 1.0);
}

TEST_CASE("IDX errors are distinct") {
    const auto dir = testing::scratch_dir("idx_err");
    make_fixtures(dir);
    const auto img = dir / "fixture-images-idx3-ubyte";
    const auto lab = dir / "fixture-labels-idx1-ubyte";
    const auto good_img = slurp(img);
    const auto good_lab = slurp(lab);

    CHECK(error_of(dir / "missing", lab).find("cannot open") != std::string::npos);

    auto bad = good_img;
    bad[3] = 0x01;
    dump(dir / "bad_magic", bad);
    CHECK(error_of(dir / "bad_magic", lab).find("magic") != std::string::npos);

    auto mismatched = good_lab;
    mismatched[7] = 3;
    mismatched.push_back(1);
    dump(dir / "three_labels", mismatched);
    CHECK(error_of(img, dir / "three_labels").find("count mismatch") != std::string::npos);

    dump(dir / "short_payload", std::vector<std::uint8_t>(good_img.begin(), good_img.end() - 5));
    CHECK(error_of(dir / "short_payload", lab).find("offset 43") != std::string::npos);

    dump(dir / "short_header", std::vector<std::uint8_t>(good_img.begin(), good_img.begin() + 10));
    CHECK(error_of(dir / "short_header", lab).find("at offset 8") != std::string::npos);
}

TEST_CASE("synthetic dataset") {
    RandomStream a(3, 0), b(3, 0);
    const Dataset x = synthetic_dataset(10, 1, 16, a);
    CHECK(x.size() == 10);
    CHECK(x.inputs == synthetic_dataset(10, 1, 16, b).inputs);
    CHECK_THROWS_AS(synthetic_dataset(0, 1, 16, a), std::invalid_argument);

    RandomStream rng(5, 0);
    const Dataset ds = synthetic_dataset(10, 50, 64, rng);
    CHECK_NOTHROW(ds.validate());
    for (double v : ds.inputs.data()) REQUIRE((v >= 0.0 && v <= 1.0));

    // A softmax-regression probe separates the classes.
    RandomStream init(0, 0);
    ParamSet p = init_glorot({64, 10}, init);
    AdamState adam(p.size(), {0.01});
    for (int step = 0; step < 300; ++step) adam_step(adam, p, batch_gradient(p, Activation::identity, ds.inputs, ds.labels));
    CHECK(loss_and_error(forward(p, Activation::identity, ds.inputs).logits, ds.labels).error < 0.05);
}

TEST_CASE("subset and projection") {
    RandomStream rng(1, 0);
    const Dataset ds = synthetic_dataset(4, 10, 20, rng);
    RandomStream r1(2, 0), r2(2, 0);
    const Dataset same = subset_and_project(ds, 0, 0, r1);
    CHECK(same.inputs == ds.inputs);

    const Dataset sub = subset_and_project(ds, 15, 6, r2);
    CHECK(sub.size() == 15);
    CHECK(sub.dim() == 6);
    RandomStream r3(2, 0);
    CHECK(subset_and_project(ds, 15, 6, r3).inputs == sub.inputs);

    RandomStream r4(2, 0);
    CHECK_THROWS_AS(subset_and_project(ds, 41, 0, r4), std::invalid_argument);
    CHECK_THROWS_AS(subset_and_project(ds, 10, 21, r4), std::invalid_argument);
}

TEST_CASE("task streams") {
    RandomStream rng(1, 0);
    const auto base = std::make_shared<const Dataset>(synthetic_dataset(10, 100, 12, rng));

    SUBCASE("random labels: pure, fresh per task, inputs untouched") {
        const TaskStream s(base, StreamKind::random_label, 7);
        const Dataset t1 = s.task_view(1);
        CHECK(t1.labels == s.task_view(1).labels);
        CHECK(t1.inputs == base->inputs);
        const Dataset t2 = s.task_view(2);
        std::size_t differ = 0;
        for (std::size_t i = 0; i < t1.size(); ++i) differ += t1.labels[i] != t2.labels[i];
        // Independent uniform labels disagree with probability 0.9.
        CHECK(differ > 800);
        CHECK(TaskStream(base, StreamKind::random_label, 8).task_view(1).labels != t1.labels);
        for (int y : t1.labels) REQUIRE((y >= 0 && y < 10));
    }

    SUBCASE("permuted pixels: identity at task 0, labels and pixel multisets kept") {
        const TaskStream s(base, StreamKind::permuted_pixels, 7);
        CHECK(s.task_view(0).inputs == base->inputs);
        const Dataset t3 = s.task_view(3);
        CHECK(t3.labels == base->labels);
        CHECK(t3.inputs != base->inputs);
        for (std::size_t i = 0; i < 5; ++i) {
            std::vector<double> a(base->inputs.row(i).begin(), base->inputs.row(i).end());
            std::vector<double> b(t3.inputs.row(i).begin(), t3.inputs.row(i).end());
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            CHECK(a == b);
        }
        auto perm = s.permutation(3);
        std::sort(perm.begin(), perm.end());
        for (std::size_t j = 0; j < perm.size(); ++j) REQUIRE(perm[j] == j);
    }

    SUBCASE("stationary") {
        const TaskStream s(base, StreamKind::stationary, 7);
        CHECK(s.task_view(5).labels == s.task_view(0).labels);
        CHECK(s.task_view(5).labels == base->labels);
    }

    CHECK(parse_stream_kind("Random-Label") == StreamKind::random_label);
    CHECK_THROWS_AS(parse_stream_kind("rotated"), std::invalid_argument);
}

TEST_CASE("minibatches partition each epoch") {
    const RandomStream rng(4, 0);
    const auto two = minibatches(512, 256, 0, rng);
    CHECK(two.size() == 2);

    const auto batches = minibatches(1000, 256, 3, rng);
    REQUIRE(batches.size() == 4);
    CHECK(batches.back().size() == 1000 - 3 * 256);
    std::vector<std::size_t> all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == i);

    CHECK(minibatches(1000, 256, 3, rng) == batches);
    CHECK(minibatches(1000, 256, 4, rng) != batches);
    CHECK(minibatches(51200, 256, 0, rng).size() == 200);
    CHECK_THROWS_AS(minibatches(10, 0, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(minibatches(10, 11, 0, rng), std::invalid_argument);
}

TEST_CASE("dataset validation") {
    Dataset ds{Matrix(2, 1), {0, 3}, 3};
    CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
    ds.labels[1] = 2;
    CHECK_NOTHROW(ds.validate());
    ds.inputs(0, 0) = std::nan("");
    CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
    CHECK_THROWS_AS((Dataset{Matrix(0, 1), {}, 1}.validate()), std::invalid_argument);
}
