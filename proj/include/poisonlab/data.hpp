#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"

namespace poisonlab {

/// n samples of d features with integer labels in [0, num_classes).
struct LabeledDataset {
    Matrix features; ///< n x d, one sample per row
    std::vector<int> labels;
    int num_classes = 0;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] std::size_t num_features() const noexcept { return static_cast<std::size_t>(features.cols()); }

    void validate() const {
        if (static_cast<std::size_t>(features.rows()) != labels.size())
            throw InvalidArgument("dataset: feature rows and label count differ");
        for (auto b : labels)
            if (b < 0 || b >= num_classes)
                throw InvalidArgument("dataset: label " + std::to_string(b) + " outside [0," + std::to_string(num_classes) + ")");
    }

    /// Rows `idx` in the given order.
    [[nodiscard]] LabeledDataset subset(std::vector<std::size_t> const& idx) const {
        LabeledDataset out;
        out.num_classes = num_classes;
        out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
        out.labels.reserve(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(idx[k]));
            out.labels.push_back(labels[idx[k]]);
        }
        return out;
    }

    friend bool operator==(LabeledDataset const& a, LabeledDataset const& b) {
        return a.num_classes == b.num_classes && a.labels == b.labels && a.features.rows() == b.features.rows() &&
               a.features.cols() == b.features.cols() && a.features == b.features;
    }
};

// -------------------------------------------------------------------------- //
// IDX files

class IdxError : public Error {
public:
    enum class Kind { io, bad_magic, truncated, count_mismatch, bad_label };

    IdxError(Kind kind, std::string const& what) : Error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(std::string const& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IdxError(IdxError::Kind::io, "cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(std::vector<std::uint8_t> const& bytes, std::size_t offset, std::string const& path) {
    if (bytes.size() < offset + 4)
        throw IdxError(IdxError::Kind::truncated, "'" + path + "': truncated header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

} // namespace detail

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

/// Reads an IDX image/label pair (MNIST layout). Pixels are scaled to [0,1].
inline LabeledDataset load_idx(std::string const& images_path, std::string const& labels_path, int num_classes = 10) {
    auto const images = detail::read_file(images_path);
    auto const labels = detail::read_file(labels_path);

    if (auto const magic = detail::read_be32(images, 0, images_path); magic != idx_images_magic)
        throw IdxError(IdxError::Kind::bad_magic, "'" + images_path + "': bad magic number " + std::to_string(magic));
    if (auto const magic = detail::read_be32(labels, 0, labels_path); magic != idx_labels_magic)
        throw IdxError(IdxError::Kind::bad_magic, "'" + labels_path + "': bad magic number " + std::to_string(magic));

    std::size_t const n_images = detail::read_be32(images, 4, images_path);
    std::size_t const rows = detail::read_be32(images, 8, images_path);
    std::size_t const cols = detail::read_be32(images, 12, images_path);
    std::size_t const n_labels = detail::read_be32(labels, 4, labels_path);
    if (n_images != n_labels)
        throw IdxError(IdxError::Kind::count_mismatch,
                       "image count " + std::to_string(n_images) + " != label count " + std::to_string(n_labels));

    auto const d = rows * cols;
    if (images.size() < 16 + n_images * d)
        throw IdxError(IdxError::Kind::truncated, "'" + images_path + "': truncated pixel data");
    if (labels.size() < 8 + n_labels)
        throw IdxError(IdxError::Kind::truncated, "'" + labels_path + "': truncated label data");

    LabeledDataset out;
    out.num_classes = num_classes;
    out.features.resize(static_cast<Eigen::Index>(n_images), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n_images; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = images[16 + i * d + j] / 255.0;
    out.labels.resize(n_labels);
    for (std::size_t i = 0; i < n_labels; ++i) {
        out.labels[i] = labels[8 + i];
        if (out.labels[i] >= num_classes)
            throw IdxError(IdxError::Kind::bad_label, "label " + std::to_string(out.labels[i]) + " out of range");
    }
    return out;
}

// -------------------------------------------------------------------------- //
// Synthetic Gaussian clusters

struct SyntheticSpec {
    int num_classes = 10;
    std::size_t per_class = 100;
    std::size_t num_features = 20;
    double separation = 4.0;
    double noise = 1.0;
    std::uint64_t seed = 1;

    friend bool operator==(SyntheticSpec const&, SyntheticSpec const&) = default;
};

/// Unit direction of class k's mean; axis-aligned when d >= B, otherwise
/// drawn from a fixed generator so that it never depends on the data seed.
inline Matrix class_directions(int num_classes, std::size_t d) {
    Matrix dirs = Matrix::Zero(num_classes, static_cast<Eigen::Index>(d));
    if (static_cast<std::size_t>(num_classes) <= d) {
        for (int k = 0; k < num_classes; ++k)
            dirs(k, k) = 1.0;
        return dirs;
    }
    std::mt19937_64 rng(0x5eedULL);
    std::normal_distribution<double> normal;
    for (int k = 0; k < num_classes; ++k) {
        for (std::size_t j = 0; j < d; ++j)
            dirs(k, static_cast<Eigen::Index>(j)) = normal(rng);
        dirs.row(k).normalize();
    }
    return dirs;
}

/// Class k ~ N(separation * u_k, noise^2 I), samples grouped by class.
inline LabeledDataset synth_gaussian(SyntheticSpec const& spec) {
    if (spec.num_classes < 2)
        throw InvalidArgument("synth_gaussian: at least two classes required");
    if (spec.per_class == 0 || spec.num_features == 0)
        throw InvalidArgument("synth_gaussian: empty dataset requested");
    auto const dirs = class_directions(spec.num_classes, spec.num_features);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, spec.noise);
    LabeledDataset out;
    out.num_classes = spec.num_classes;
    auto const n = static_cast<Eigen::Index>(spec.per_class) * spec.num_classes;
    out.features.resize(n, static_cast<Eigen::Index>(spec.num_features));
    Eigen::Index row = 0;
    for (int k = 0; k < spec.num_classes; ++k)
        for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
            for (std::size_t j = 0; j < spec.num_features; ++j)
                out.features(row, static_cast<Eigen::Index>(j)) = spec.separation * dirs(k, static_cast<Eigen::Index>(j)) + normal(rng);
            out.labels.push_back(k);
        }
    return out;
}

inline void write_dataset_csv(std::ostream& os, LabeledDataset const& ds) {
    os << "label";
    for (std::size_t j = 0; j < ds.num_features(); ++j)
        os << ",x" << j;
    os << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        os << ds.labels[i];
        for (std::size_t j = 0; j < ds.num_features(); ++j)
            os << ',' << format_double(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        os << '\n';
    }
}

// -------------------------------------------------------------------------- //
// Partitions

enum class PartitionScheme { iid, dirichlet, class_per_agent };

inline std::string_view to_string(PartitionScheme s) {
    switch (s) {
    case PartitionScheme::iid: return "iid";
    case PartitionScheme::dirichlet: return "dirichlet";
    case PartitionScheme::class_per_agent: return "class_per_agent";
    }
    return "?";
}

inline PartitionScheme parse_partition_scheme(std::string_view name) {
    if (name == "iid")
        return PartitionScheme::iid;
    if (name == "dirichlet")
        return PartitionScheme::dirichlet;
    if (name == "class_per_agent" || name == "noniid")
        return PartitionScheme::class_per_agent;
    throw InvalidArgument("unknown partition scheme '" + std::string(name) + "'");
}

struct PartitionSpec {
    PartitionScheme scheme = PartitionScheme::iid;
    double alpha = 1.0;
    std::uint64_t seed = 1;
    std::size_t num_agents = 1;
    std::size_t max_retries = 16;

    friend bool operator==(PartitionSpec const&, PartitionSpec const&) = default;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(LabeledDataset const& ds) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i)
        out[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    return out;
}

/// Splits `idx` into `parts` contiguous chunks whose sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> even_split(std::vector<std::size_t> const& idx, std::size_t parts) {
    std::vector<std::vector<std::size_t>> out(parts);
    auto const base = idx.size() / parts, extra = idx.size() % parts;
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        auto const len = base + (p < extra ? 1 : 0);
        out[p].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos), idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> try_partition(LabeledDataset const& ds, PartitionSpec const& spec, std::uint64_t seed) {
    auto const W = spec.num_agents;
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> shards(W);
    switch (spec.scheme) {
    case PartitionScheme::iid: {
        std::vector<std::size_t> idx(ds.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        shards = even_split(idx, W);
        break;
    }
    case PartitionScheme::dirichlet: {
        std::gamma_distribution<double> gamma(spec.alpha, 1.0);
        for (auto idx : indices_by_class(ds)) {
            std::shuffle(idx.begin(), idx.end(), rng);
            std::vector<double> share(W);
            for (auto& s : share)
                s = gamma(rng);
            auto const total = std::accumulate(share.begin(), share.end(), 0.0);
            double cumulative = 0;
            std::size_t start = 0;
            for (std::size_t w = 0; w < W; ++w) {
                cumulative += share[w] / total;
                auto const end = w + 1 == W ? idx.size()
                                            : std::min(idx.size(), static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(idx.size()))));
                for (auto k = start; k < std::max(start, end); ++k)
                    shards[w].push_back(idx[k]);
                start = std::max(start, end);
            }
        }
        break;
    }
    case PartitionScheme::class_per_agent: {
        auto const B = static_cast<std::size_t>(ds.num_classes);
        auto by_class = indices_by_class(ds);
        for (std::size_t c = 0; c < B; ++c) {
            auto& idx = by_class[c];
            std::shuffle(idx.begin(), idx.end(), rng);
            if (W <= B) {
                auto& shard = shards[c % W];
                shard.insert(shard.end(), idx.begin(), idx.end());
                continue;
            }
            std::vector<std::size_t> owners;
            for (std::size_t w = c; w < W; w += B)
                owners.push_back(w);
            auto const pieces = even_split(idx, owners.size());
            for (std::size_t k = 0; k < owners.size(); ++k)
                shards[owners[k]].insert(shards[owners[k]].end(), pieces[k].begin(), pieces[k].end());
        }
        break;
    }
    }
    for (auto& s : shards)
        std::sort(s.begin(), s.end());
    return shards;
}

} // namespace detail

/// Sample indices per agent. Disjoint, covering, sorted ascending per agent.
inline std::vector<std::vector<std::size_t>> partition_indices(LabeledDataset const& ds, PartitionSpec const& spec) {
    if (spec.num_agents == 0)
        throw InvalidArgument("partition: at least one agent required");
    if (spec.scheme == PartitionScheme::dirichlet && !(spec.alpha > 0))
        throw InvalidArgument("partition: dirichlet alpha must be positive");
    if (ds.size() < spec.num_agents)
        throw InvalidArgument("partition: fewer samples than agents");
    for (std::size_t attempt = 0; attempt <= spec.max_retries; ++attempt) {
        auto shards = detail::try_partition(ds, spec, spec.seed + attempt);
        if (std::none_of(shards.begin(), shards.end(), [](auto const& s) { return s.empty(); }))
            return shards;
        if (spec.scheme != PartitionScheme::dirichlet)
            break; // deterministic schemes will not improve on retry
    }
    throw InvalidArgument("partition: some agent received no samples");
}

inline std::vector<LabeledDataset> partition(LabeledDataset const& ds, PartitionSpec const& spec) {
    std::vector<LabeledDataset> out;
    for (auto const& idx : partition_indices(ds, spec))
        out.push_back(ds.subset(idx));
    return out;
}

} // namespace poisonlab
