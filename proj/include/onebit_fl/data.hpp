#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace onebit {

/// Row-major samples. For classification `targets` holds class indices
/// (exactly representable small integers); for regression the real target.
struct Dataset {
    std::size_t dim = 0;
    std::vector<double> features;
    std::vector<double> targets;

    std::size_t size() const noexcept { return targets.size(); }
    std::span<const double> row(std::size_t i) const noexcept { return {features.data() + i * dim, dim}; }
    void append(std::span<const double> x, double y);
};

struct ClientPartition {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// A shared, read-only sample pool plus each client's index sets into it.
struct FederatedDataset {
    Dataset data;
    std::vector<ClientPartition> clients;
    std::size_t num_classes = 0;  // 0 for regression
};

enum class SyntheticKind { linear, logistic };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::logistic;
    std::size_t clients = 20;
    std::size_t samples_per_client = 500;
    std::size_t dim = 50;
    double heterogeneity = 1.0;
    double noise = 0.1;
    std::uint64_t seed = 1;
};

/// Per-client ground truth theta_k = theta_bar + heterogeneity * delta_k with
/// theta_bar, delta_k ~ N(0, I) and features x ~ N(0, I). Linear targets
/// are theta_k.x + noise*eps; logistic labels are 1[theta_k.x + noise*eps > 0].
struct SyntheticData {
    std::vector<Dataset> clients;
    std::vector<std::vector<double>> theta;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Classic label-skew protocol: sort sample indices by label (stable), cut
/// into clients*shards_per_client equal shards (the remainder is dropped),
/// and deal shards_per_client random shards to each client.
std::vector<std::vector<std::size_t>> partition_by_label(std::span<const double> labels, std::size_t clients,
                                                         std::size_t shards_per_client, std::uint64_t seed);

/// Shuffles a client's indices with its own stream and holds out
/// round(test_fraction * size) of them (at least one each side when size >= 2).
ClientPartition split_train_test(std::vector<std::size_t> indices, double test_fraction, std::uint64_t seed,
                                 std::size_t client_id);

/// Concatenates per-client datasets and splits each into train/test.
FederatedDataset federate(const std::vector<Dataset>& per_client, double test_fraction, std::uint64_t seed,
                          std::size_t num_classes);

/// Label-skew federation of a pooled labelled dataset.
FederatedDataset federate_by_label(Dataset pooled, std::size_t clients, std::size_t shards_per_client,
                                   double test_fraction, std::uint64_t seed, std::size_t num_classes);

enum class FileFormat { idx, csv };

/// IDX: canonical big-endian magic (0x00 0x00 type ndims) and dimensions;
/// `path` is the image file and `labels_path` the matching label file.
/// Unsigned-byte pixels are scaled to [0, 1]. CSV: one sample per line,
/// label first, then the features; no header.
Dataset load_dataset(const std::filesystem::path& path, FileFormat format,
                     const std::filesystem::path& labels_path = {});

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Dataset load_csv(const std::filesystem::path& path);

/// Affine rescale of every feature to [0, 1] using the global min/max.
/// Idempotent on data already spanning [0, 1].
void scale_features_unit(Dataset& data);

}  // namespace onebit
