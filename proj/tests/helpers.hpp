#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "curvlab/network.hpp"

namespace testing {

inline curvlab::Matrix random_matrix(std::size_t rows, std::size_t cols, curvlab::RandomStream& rng,
                                     double scale = 1.0) {
    curvlab::Matrix m(rows, cols);
    for (double& v : m.data()) v = scale * rng.next_gaussian();
    return m;
}

inline std::vector<int> random_labels(std::size_t n, int classes, curvlab::RandomStream& rng) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
    return y;
}

/// Glorot weights plus small random biases, so bias gradients are exercised
/// away from zero.
inline curvlab::ParamSet random_params(const std::vector<std::size_t>& layout, std::uint64_t seed) {
    curvlab::RandomStream rng(seed, 1);
    curvlab::ParamSet p = curvlab::init_glorot(layout, rng);
    for (std::size_t l = 0; l < p.num_layers(); ++l)
        for (double& b : p.biases(l)) b = 0.1 * rng.next_gaussian();
    return p;
}

/// max_i |a_i - b_i| / max(1, max_i |b_i|)
inline double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return diff / scale;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("curvlab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
