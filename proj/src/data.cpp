#include "onebit_fl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "onebit_fl/error.hpp"
#include "onebit_fl/rng.hpp"

namespace onebit {

void Dataset::append(std::span<const double> x, double y) {
    if (dim == 0 && targets.empty()) dim = x.size();
    if (x.size() != dim) throw InvalidArgument("dataset row has wrong dimension");
    features.insert(features.end(), x.begin(), x.end());
    targets.push_back(y);
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.clients == 0 || spec.samples_per_client == 0 || spec.dim == 0) {
        throw ConfigError("synthetic data: clients, samples_per_client and dim must be positive");
    }
    if (!(spec.heterogeneity >= 0.0) || !(spec.noise >= 0.0)) {
        throw ConfigError("synthetic data: heterogeneity and noise must be non-negative");
    }
    auto shared = CounterRng::derive(spec.seed, Stream::data_generation, 0);
    std::vector<double> theta_bar(spec.dim);
    for (auto& t : theta_bar) t = shared.normal();

    SyntheticData out;
    out.clients.resize(spec.clients);
    out.theta.resize(spec.clients);
    std::vector<double> x(spec.dim);
    for (std::size_t k = 0; k < spec.clients; ++k) {
        auto rng = CounterRng::derive(spec.seed, Stream::data_generation, k + 1);
        auto& theta = out.theta[k];
        theta = theta_bar;
        for (auto& t : theta) {
            // Always draw, so heterogeneity only rescales the perturbation.
            const double delta = rng.normal();
            t += spec.heterogeneity * delta;
        }
        Dataset& d = out.clients[k];
        d.dim = spec.dim;
        d.features.reserve(spec.samples_per_client * spec.dim);
        d.targets.reserve(spec.samples_per_client);
        for (std::size_t i = 0; i < spec.samples_per_client; ++i) {
            double score = 0.0;
            for (std::size_t j = 0; j < spec.dim; ++j) {
                x[j] = rng.normal();
                score += theta[j] * x[j];
            }
            score += spec.noise * rng.normal();
            const double y = spec.kind == SyntheticKind::linear ? score : (score > 0.0 ? 1.0 : 0.0);
            d.append(x, y);
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> partition_by_label(std::span<const double> labels, std::size_t clients,
                                                         std::size_t shards_per_client, std::uint64_t seed) {
    if (clients == 0 || shards_per_client == 0) {
        throw ConfigError("partition: clients and shards_per_client must be positive");
    }
    const std::size_t shards = clients * shards_per_client;
    if (labels.size() < shards) {
        throw ConfigError("partition: " + std::to_string(labels.size()) + " samples cannot fill " +
                          std::to_string(shards) + " shards");
    }
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });

    const std::size_t shard_size = labels.size() / shards;
    std::vector<std::size_t> shard_ids(shards);
    std::iota(shard_ids.begin(), shard_ids.end(), std::size_t{0});
    auto rng = CounterRng::derive(seed, Stream::partition);
    rng.shuffle(std::span<std::size_t>(shard_ids));

    std::vector<std::vector<std::size_t>> parts(clients);
    for (std::size_t k = 0; k < clients; ++k) {
        auto& part = parts[k];
        part.reserve(shards_per_client * shard_size);
        for (std::size_t s = 0; s < shards_per_client; ++s) {
            const std::size_t shard = shard_ids[k * shards_per_client + s];
            const auto first = order.begin() + static_cast<std::ptrdiff_t>(shard * shard_size);
            part.insert(part.end(), first, first + static_cast<std::ptrdiff_t>(shard_size));
        }
        std::sort(part.begin(), part.end());
    }
    return parts;
}

ClientPartition split_train_test(std::vector<std::size_t> indices, double test_fraction, std::uint64_t seed,
                                 std::size_t client_id) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
    auto rng = CounterRng::derive(seed, Stream::partition, client_id + 1);
    rng.shuffle(std::span<std::size_t>(indices));
    auto test_count = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(indices.size())));
    if (test_fraction > 0.0 && indices.size() >= 2) test_count = std::clamp<std::size_t>(test_count, 1, indices.size() - 1);
    ClientPartition p;
    p.test.assign(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(test_count));
    p.train.assign(indices.begin() + static_cast<std::ptrdiff_t>(test_count), indices.end());
    std::sort(p.train.begin(), p.train.end());
    std::sort(p.test.begin(), p.test.end());
    return p;
}

FederatedDataset federate(const std::vector<Dataset>& per_client, double test_fraction, std::uint64_t seed,
                          std::size_t num_classes) {
    FederatedDataset fed;
    fed.num_classes = num_classes;
    for (std::size_t k = 0; k < per_client.size(); ++k) {
        const Dataset& d = per_client[k];
        if (k == 0) fed.data.dim = d.dim;
        if (d.dim != fed.data.dim) throw InvalidArgument("federate: clients disagree on feature dimension");
        const std::size_t offset = fed.data.size();
        fed.data.features.insert(fed.data.features.end(), d.features.begin(), d.features.end());
        fed.data.targets.insert(fed.data.targets.end(), d.targets.begin(), d.targets.end());
        std::vector<std::size_t> idx(d.size());
        std::iota(idx.begin(), idx.end(), offset);
        fed.clients.push_back(split_train_test(std::move(idx), test_fraction, seed, k));
    }
    return fed;
}

FederatedDataset federate_by_label(Dataset pooled, std::size_t clients, std::size_t shards_per_client,
                                   double test_fraction, std::uint64_t seed, std::size_t num_classes) {
    FederatedDataset fed;
    fed.num_classes = num_classes;
    auto parts = partition_by_label(pooled.targets, clients, shards_per_client, seed);
    fed.data = std::move(pooled);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        fed.clients.push_back(split_train_test(std::move(parts[k]), test_fraction, seed, k));
    }
    return fed;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct IdxHeader {
    std::vector<std::size_t> dims;
    std::size_t data_offset = 0;
};

IdxHeader parse_idx_header(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    if (bytes.size() < 4) throw FormatError(path.string() + ": truncated IDX magic at byte offset 0");
    if (bytes[0] != 0 || bytes[1] != 0) throw FormatError(path.string() + ": bad IDX magic at byte offset 0");
    if (bytes[2] != 0x08) {
        throw FormatError(path.string() + ": unsupported IDX element type at byte offset 2 (only unsigned byte)");
    }
    const std::size_t ndims = bytes[3];
    if (ndims == 0) throw FormatError(path.string() + ": IDX with zero dimensions at byte offset 3");
    IdxHeader h;
    h.data_offset = 4 + 4 * ndims;
    if (bytes.size() < h.data_offset) throw FormatError(path.string() + ": truncated IDX header at byte offset 4");
    std::size_t total = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        const std::size_t o = 4 + 4 * d;
        const std::size_t v = (std::size_t{bytes[o]} << 24) | (std::size_t{bytes[o + 1]} << 16) |
                              (std::size_t{bytes[o + 2]} << 8) | std::size_t{bytes[o + 3]};
        h.dims.push_back(v);
        total *= v;
    }
    if (bytes.size() != h.data_offset + total) {
        throw FormatError(path.string() + ": IDX payload size mismatch at byte offset " +
                          std::to_string(h.data_offset) + " (expected " + std::to_string(total) + " bytes, found " +
                          std::to_string(bytes.size() - h.data_offset) + ")");
    }
    return h;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img = read_file(images);
    const auto lab = read_file(labels);
    const IdxHeader ih = parse_idx_header(img, images);
    const IdxHeader lh = parse_idx_header(lab, labels);
    if (lh.dims.size() != 1) throw FormatError(labels.string() + ": label file must be 1-dimensional (byte offset 3)");
    if (ih.dims[0] != lh.dims[0]) {
        throw FormatError(images.string() + ": sample count " + std::to_string(ih.dims[0]) +
                          " does not match label count " + std::to_string(lh.dims[0]) + " (byte offset 4)");
    }
    Dataset d;
    const std::size_t n = ih.dims[0];
    d.dim = 1;
    for (std::size_t i = 1; i < ih.dims.size(); ++i) d.dim *= ih.dims[i];
    d.features.resize(n * d.dim);
    d.targets.resize(n);
    for (std::size_t i = 0; i < n * d.dim; ++i) d.features[i] = img[ih.data_offset + i] / 255.0;
    for (std::size_t i = 0; i < n; ++i) d.targets[i] = lab[lh.data_offset + i];
    return d;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    Dataset d;
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> row;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        row.clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || cell.find_first_not_of(" \t", used) != std::string::npos) {
                throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field '" + cell + "'");
            }
            row.push_back(v);
        }
        if (row.size() < 2) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": need a label and at least one feature");
        }
        if (d.size() > 0 && row.size() - 1 != d.dim) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": ragged row (" +
                              std::to_string(row.size() - 1) + " features, expected " + std::to_string(d.dim) + ")");
        }
        d.append(std::span<const double>(row).subspan(1), row[0]);
    }
    return d;
}

Dataset load_dataset(const std::filesystem::path& path, FileFormat format, const std::filesystem::path& labels_path) {
    if (format == FileFormat::csv) return load_csv(path);
    if (labels_path.empty()) throw ConfigError("IDX datasets need a label file path");
    return load_idx(path, labels_path);
}

void scale_features_unit(Dataset& data) {
    if (data.features.empty()) return;
    const auto [lo, hi] = std::minmax_element(data.features.begin(), data.features.end());
    const double a = *lo;
    const double range = *hi - *lo;
    if (range == 0.0) {
        std::fill(data.features.begin(), data.features.end(), 0.0);
        return;
    }
    if (a == 0.0 && range == 1.0) return;
    for (auto& f : data.features) f = (f - a) / range;
}

}  // namespace onebit
