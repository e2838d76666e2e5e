#pragma once

// Counter-based random stream.
//
// Value n of stream (seed, stream_id) is
//   key = splitmix64(seed ^ splitmix64(stream_id ^ 0x5851F42D4C957F2D))
//   x_n = splitmix64(key + (n + 1) * 0x9E3779B97F4A7C15)
// where splitmix64 is the standard finalizer (shift 30/27/31, multipliers
// 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). Only 64-bit integer
// arithmetic is involved, so sequences replicate across platforms.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>

namespace curvlab {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stable 64-bit label for a purpose string (FNV-1a), used to carve out
/// independent streams: RandomStream(seed, stream_label("labels")).
constexpr std::uint64_t stream_label(std::string_view name) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
        : seed_(seed), stream_id_(stream_id),
          key_(splitmix64(seed ^ splitmix64(stream_id ^ 0x5851F42D4C957F2DULL))) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    std::uint64_t position() const noexcept { return counter_; }

    /// Independent child stream, e.g. one per task or per epoch.
    RandomStream derive(std::uint64_t label) const noexcept {
        return {seed_, splitmix64(stream_id_ ^ splitmix64(label + 0xD1B54A32D192ED03ULL))};
    }

    std::uint64_t next_u64() noexcept {
        ++counter_;
        return splitmix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double next_unit() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) {
        if (!(lo < hi)) throw std::invalid_argument("next_uniform: requires lo < hi");
        return lo + (hi - lo) * next_unit();
    }

    /// Standard normal via Box-Muller; consumes two values per draw.
    double next_gaussian() noexcept;

    /// Uniform integer in [0, n) by rejection, n > 0.
    std::uint64_t next_below(std::uint64_t n);

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace curvlab
