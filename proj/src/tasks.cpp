#include "curvlab/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

namespace curvlab {

void Dataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset is empty");
    if (inputs.rows() != labels.size()) {
        throw std::invalid_argument("dataset has " + std::to_string(inputs.rows()) + " inputs but " +
                                    std::to_string(labels.size()) + " labels");
    }
    if (num_classes <= 0) throw std::invalid_argument("dataset needs at least one class");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) {
            throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(num_classes) + ")");
        }
    }
    for (double v : inputs.data()) {
        if (!std::isfinite(v)) throw std::invalid_argument("dataset contains a non-finite input");
    }
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
    Dataset out{Matrix(indices.size(), dim()), std::vector<int>(indices.size()), num_classes};
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = inputs.row(indices[i]);
        std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
        out.labels[i] = labels[indices[i]];
    }
    return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError("cannot open IDX file '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) {
        throw IdxError("truncated IDX header in '" + path.string() + "' at offset " +
                       std::to_string(offset));
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
}

void require_payload(const std::vector<std::uint8_t>& bytes, std::size_t header, std::size_t payload,
                     const std::filesystem::path& path) {
    if (bytes.size() < header + payload) {
        throw IdxError("truncated IDX payload in '" + path.string() + "': data ends at offset " +
                       std::to_string(bytes.size()) + ", expected " +
                       std::to_string(header + payload) + " bytes");
    }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0, images_path);
    if (img_magic != kIdxImageMagic) {
        throw IdxError("bad IDX image magic in '" + images_path.string() + "'");
    }
    const std::uint32_t n_img = read_be32(img, 4, images_path);
    const std::uint32_t rows = read_be32(img, 8, images_path);
    const std::uint32_t cols = read_be32(img, 12, images_path);

    const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabelMagic) {
        throw IdxError("bad IDX label magic in '" + labels_path.string() + "'");
    }
    const std::uint32_t n_lab = read_be32(lab, 4, labels_path);
    if (n_img != n_lab) {
        throw IdxError("IDX count mismatch: " + std::to_string(n_img) + " images vs " +
                       std::to_string(n_lab) + " labels");
    }

    const std::size_t n = n_img;
    const std::size_t dim = std::size_t{rows} * cols;
    require_payload(img, 16, n * dim, images_path);
    require_payload(lab, 8, n, labels_path);

    Dataset ds{Matrix(n, dim), std::vector<int>(n), 0};
    auto px = ds.inputs.data();
    for (std::size_t i = 0; i < n * dim; ++i) px[i] = static_cast<double>(img[16 + i]) / 255.0;
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels,
               std::uint32_t rows, std::uint32_t cols) {
    if (pixels.size() != labels.size() * rows * cols) {
        throw std::invalid_argument("write_idx: pixel count does not match labels x rows x cols");
    }
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw IdxError("cannot create IDX output files");
    put_be32(img, kIdxImageMagic);
    put_be32(img, static_cast<std::uint32_t>(labels.size()));
    put_be32(img, rows);
    put_be32(img, cols);
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    put_be32(lab, kIdxLabelMagic);
    put_be32(lab, static_cast<std::uint32_t>(labels.size()));
    lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!img || !lab) throw IdxError("failed writing IDX output files");
}

Dataset synthetic_dataset(int num_classes, std::size_t per_class, std::size_t dim, RandomStream& rng) {
    if (num_classes <= 0 || per_class == 0 || dim == 0) {
        throw std::invalid_argument("synthetic_dataset: counts must be positive");
    }
    constexpr double kSigma = 0.15;
    const auto classes = static_cast<std::size_t>(num_classes);
    Matrix centers(classes, dim);
    for (std::size_t c = 0; c < classes; ++c) {
        auto row = centers.row(c);
        double norm = 0.0;
        do {
            for (double& v : row) v = std::abs(rng.next_gaussian());
            norm = norm2(row);
        } while (norm == 0.0);
        for (double& v : row) v /= norm;
    }
    const std::size_t n = classes * per_class;
    Dataset ds{Matrix(n, dim), std::vector<int>(n), num_classes};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        ds.labels[i] = static_cast<int>(c);
        const auto center = centers.row(c);
        auto row = ds.inputs.row(i);
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] = std::clamp(center[j] + kSigma * rng.next_gaussian(), 0.0, 1.0);
        }
    }
    return ds;
}

Dataset subset_and_project(const Dataset& ds, std::size_t subset_size, std::size_t projection_dim,
                           RandomStream& rng) {
    if (subset_size > ds.size()) {
        throw std::invalid_argument("subset_size " + std::to_string(subset_size) +
                                    " exceeds dataset size " + std::to_string(ds.size()));
    }
    Dataset out = ds;
    if (subset_size > 0) {
        std::vector<std::size_t> idx(ds.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(std::span(idx));
        idx.resize(subset_size);
        out = ds.select(idx);
    }
    if (projection_dim == 0) return out;
    const std::size_t d = ds.dim();
    if (projection_dim > d) {
        throw std::invalid_argument("projection_dim " + std::to_string(projection_dim) +
                                    " exceeds input dimension " + std::to_string(d));
    }
    Matrix proj(d, projection_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& v : proj.data()) v = scale * rng.next_gaussian();
    out.inputs = matmul(out.inputs, proj);
    return out;
}

StreamKind parse_stream_kind(std::string_view name) {
    std::string key;
    for (char c : name) {
        if (c == '-') c = '_';
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (key == "random_label") return StreamKind::random_label;
    if (key == "permuted_pixels" || key == "permuted") return StreamKind::permuted_pixels;
    if (key == "stationary") return StreamKind::stationary;
    throw std::invalid_argument("unknown stream kind '" + std::string(name) + "'");
}

std::string_view to_string(StreamKind k) {
    switch (k) {
        case StreamKind::random_label: return "random_label";
        case StreamKind::permuted_pixels: return "permuted_pixels";
        case StreamKind::stationary: return "stationary";
    }
    return "unknown";
}

TaskStream::TaskStream(std::shared_ptr<const Dataset> base, StreamKind kind, std::uint64_t master_seed)
    : base_(std::move(base)), kind_(kind), seed_(master_seed) {
    if (!base_) throw std::invalid_argument("TaskStream: null base dataset");
    base_->validate();
}

std::vector<std::size_t> TaskStream::permutation(std::uint64_t k) const {
    std::vector<std::size_t> perm(base_->dim());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (k == 0) return perm;
    RandomStream rng = RandomStream(seed_, stream_label("task/permutation")).derive(k);
    rng.shuffle(std::span(perm));
    return perm;
}

Dataset TaskStream::task_view(std::uint64_t k) const {
    switch (kind_) {
        case StreamKind::stationary: return *base_;
        case StreamKind::random_label: {
            Dataset view = *base_;
            RandomStream rng = RandomStream(seed_, stream_label("task/labels")).derive(k);
            const auto classes = static_cast<std::uint64_t>(view.num_classes);
            for (int& y : view.labels) y = static_cast<int>(rng.next_below(classes));
            return view;
        }
        case StreamKind::permuted_pixels: {
            Dataset view = *base_;
            if (k == 0) return view;
            const auto perm = permutation(k);
            for (std::size_t i = 0; i < view.size(); ++i) {
                const auto src = base_->inputs.row(i);
                auto dst = view.inputs.row(i);
                for (std::size_t j = 0; j < perm.size(); ++j) dst[j] = src[perm[j]];
            }
            return view;
        }
    }
    return *base_;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t epoch, const RandomStream& rng) {
    if (batch_size == 0 || batch_size > n) {
        throw std::invalid_argument("batch_size must be in [1, " + std::to_string(n) + "], got " +
                                    std::to_string(batch_size));
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    RandomStream local = rng.derive(epoch);
    local.shuffle(std::span(idx));
    std::vector<std::vector<std::size_t>> out;
    out.reserve((n + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, RandomStream rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span(idx));
    idx.resize(std::min(count, n));
    return idx;
}

}  // namespace curvlab
