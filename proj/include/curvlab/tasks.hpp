#pragma once

// Datasets and continual task streams.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "curvlab/numerics.hpp"
#include "curvlab/random.hpp"

namespace curvlab {

/// Malformed or unreadable IDX input.
class IdxError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Matrix inputs;            // N x D
    std::vector<int> labels;  // N
    int num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return inputs.cols(); }

    /// Throws std::invalid_argument when the invariants (N >= 1, labels in
    /// range, finite inputs, matching row count) do not hold.
    void validate() const;

    /// Rows `indices` of this dataset, in that order.
    Dataset select(std::span<const std::size_t> indices) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image/label pair (e.g. MNIST). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes an IDX pair; images are N x rows x cols bytes.
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels,
               std::uint32_t rows, std::uint32_t cols);

/// Gaussian clusters (σ = 0.15) around random unit-norm centers in the
/// positive orthant, clipped to [0, 1]. Sample i belongs to class i mod C.
Dataset synthetic_dataset(int num_classes, std::size_t per_class, std::size_t dim, RandomStream& rng);

/// Uniform subsample without replacement, then (if projection_dim > 0) a
/// fixed Gaussian projection with entries N(0, 1/D). subset_size = 0 keeps
/// every sample.
Dataset subset_and_project(const Dataset& ds, std::size_t subset_size, std::size_t projection_dim,
                           RandomStream& rng);

enum class StreamKind { random_label, permuted_pixels, stationary };

StreamKind parse_stream_kind(std::string_view name);
std::string_view to_string(StreamKind k);

class TaskStream {
public:
    TaskStream(std::shared_ptr<const Dataset> base, StreamKind kind, std::uint64_t master_seed);

    const Dataset& base() const noexcept { return *base_; }
    StreamKind kind() const noexcept { return kind_; }
    std::uint64_t master_seed() const noexcept { return seed_; }

    /// Dataset for task k: fresh uniform labels (random_label), a pixel
    /// permutation shared by all images (permuted_pixels, identity at k = 0)
    /// or the base itself (stationary).
    Dataset task_view(std::uint64_t k) const;

    /// Pixel permutation used by permuted_pixels for task k.
    std::vector<std::size_t> permutation(std::uint64_t k) const;

private:
    std::shared_ptr<const Dataset> base_;
    StreamKind kind_;
    std::uint64_t seed_;
};

/// Index slices for one epoch; indices are reshuffled from rng.derive(epoch)
/// and the final short batch is kept.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t epoch, const RandomStream& rng);

/// First min(count, n) entries of a permutation of [0, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, RandomStream rng);

}  // namespace curvlab
