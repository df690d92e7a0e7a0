#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "onebit_fl/data.hpp"
#include "onebit_fl/error.hpp"
#include "support.hpp"

using namespace onebit;

namespace {

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    std::vector<std::uint8_t> b{0, 0, 0x08, 3};
    for (std::uint32_t v : {n, rows, cols}) {
        b.push_back(static_cast<std::uint8_t>(v >> 24));
        b.push_back(static_cast<std::uint8_t>(v >> 16));
        b.push_back(static_cast<std::uint8_t>(v >> 8));
        b.push_back(static_cast<std::uint8_t>(v));
    }
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>((i * 37) % 256));
    return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
    const auto n = static_cast<std::uint32_t>(labels.size());
    std::vector<std::uint8_t> b(8 + labels.size(), 0);
    b[2] = 0x08;
    b[3] = 1;
    for (int i = 0; i < 4; ++i) b[4 + i] = static_cast<std::uint8_t>(n >> (24 - 8 * i));
    std::copy(labels.begin(), labels.end(), b.begin() + 8);
    return b;
}

}  // namespace

TEST_CASE("synthetic data is deterministic and heterogeneous") {
    SyntheticSpec spec;
    spec.clients = 4;
    spec.samples_per_client = 50;
    spec.dim = 5;
    spec.seed = 3;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    REQUIRE(a.clients.size() == 4);
    CHECK(a.clients[0].features == b.clients[0].features);
    CHECK(a.clients[2].targets == b.clients[2].targets);
    CHECK(a.theta[0] != a.theta[1]);
    for (double y : a.clients[1].targets) CHECK((y == 0.0 || y == 1.0));

    spec.heterogeneity = 0.0;
    const auto iid = generate_synthetic(spec);
    CHECK(iid.theta[0] == iid.theta[3]);
}

TEST_CASE("synthetic linear targets follow theta_k") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::linear;
    spec.clients = 2;
    spec.samples_per_client = 10;
    spec.dim = 3;
    spec.noise = 0.0;
    const auto s = generate_synthetic(spec);
    const auto& d = s.clients[1];
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto x = d.row(i);
        double score = 0.0;
        for (std::size_t j = 0; j < 3; ++j) score += s.theta[1][j] * x[j];
        CHECK(d.targets[i] == doctest::Approx(score));
    }
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec;
    spec.dim = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}

TEST_CASE("label-skew partition gives each client few labels") {
    std::vector<double> labels;
    for (int c = 0; c < 10; ++c) {
        for (int i = 0; i < 100; ++i) labels.push_back(c);
    }
    const auto parts = partition_by_label(labels, 20, 2, 7);
    REQUIRE(parts.size() == 20);
    std::set<std::size_t> used;
    for (const auto& p : parts) {
        CHECK(p.size() == 50);
        std::set<double> classes;
        for (auto i : p) {
            classes.insert(labels[i]);
            CHECK(used.insert(i).second);
        }
        CHECK(classes.size() <= 2);
    }
    CHECK(used.size() == 1000);
    CHECK(partition_by_label(labels, 20, 2, 7) == parts);
    CHECK_THROWS_AS(partition_by_label(std::vector<double>(5, 0.0), 3, 2, 1), ConfigError);
}

TEST_CASE("train/test split") {
    std::vector<std::size_t> idx(10);
    for (std::size_t i = 0; i < 10; ++i) idx[i] = 100 + i;
    const auto p = split_train_test(idx, 0.2, 1, 0);
    CHECK(p.test.size() == 2);
    CHECK(p.train.size() == 8);
    CHECK(std::is_sorted(p.train.begin(), p.train.end()));
    std::vector<std::size_t> merged = p.train;
    merged.insert(merged.end(), p.test.begin(), p.test.end());
    std::sort(merged.begin(), merged.end());
    CHECK(merged == idx);
    CHECK(split_train_test(idx, 0.0, 1, 0).test.empty());
    CHECK(split_train_test(std::vector<std::size_t>{1, 2}, 0.01, 1, 0).test.size() == 1);
    CHECK_THROWS_AS(split_train_test(idx, 1.0, 1, 0), ConfigError);
}

TEST_CASE("federate offsets client indices into the pooled data") {
    SyntheticSpec spec;
    spec.clients = 3;
    spec.samples_per_client = 20;
    spec.dim = 2;
    const auto s = generate_synthetic(spec);
    const auto fed = federate(s.clients, 0.25, 1, 2);
    CHECK(fed.data.size() == 60);
    CHECK(fed.num_classes == 2);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(fed.clients[k].train.size() == 15);
        for (auto i : fed.clients[k].train) CHECK((i >= 20 * k && i < 20 * (k + 1)));
    }
}

TEST_CASE("IDX loader") {
    const auto dir = testing::scratch_dir("idx");
    testing::write_bytes(dir / "img", idx_images(3, 2, 2));
    testing::write_bytes(dir / "lab", idx_labels({7, 0, 255}));
    const auto d = load_dataset(dir / "img", FileFormat::idx, dir / "lab");
    CHECK(d.size() == 3);
    CHECK(d.dim == 4);
    CHECK(d.features[1] == doctest::Approx(37.0 / 255.0));
    CHECK(d.targets == std::vector<double>{7, 0, 255});
    for (double x : d.features) CHECK((x >= 0.0 && x <= 1.0));

    SUBCASE("truncated payload") {
        auto bytes = idx_images(3, 2, 2);
        bytes.pop_back();
        testing::write_bytes(dir / "short", bytes);
        CHECK_THROWS_WITH_AS(load_idx(dir / "short", dir / "lab"), doctest::Contains("byte offset 16"), FormatError);
    }
    SUBCASE("bad magic") {
        auto bytes = idx_images(3, 2, 2);
        bytes[0] = 1;
        testing::write_bytes(dir / "magic", bytes);
        CHECK_THROWS_AS(load_idx(dir / "magic", dir / "lab"), FormatError);
    }
    SUBCASE("non-byte element type") {
        auto bytes = idx_images(3, 2, 2);
        bytes[2] = 0x0D;
        testing::write_bytes(dir / "float", bytes);
        CHECK_THROWS_AS(load_idx(dir / "float", dir / "lab"), FormatError);
    }
    SUBCASE("count mismatch") {
        testing::write_bytes(dir / "lab2", idx_labels({1, 2}));
        CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab2"), FormatError);
    }
    SUBCASE("missing label path") {
        CHECK_THROWS_AS(load_dataset(dir / "img", FileFormat::idx), ConfigError);
    }
}

TEST_CASE("CSV loader") {
    const auto dir = testing::scratch_dir("csv");
    testing::write_text(dir / "ok.csv", "1,0.5,2\n0,1.5,-1\r\n\n2,3,4\n");
    const auto d = load_dataset(dir / "ok.csv", FileFormat::csv);
    CHECK(d.size() == 3);
    CHECK(d.dim == 2);
    CHECK(d.targets == std::vector<double>{1, 0, 2});
    CHECK(d.features == std::vector<double>{0.5, 2, 1.5, -1, 3, 4});

    testing::write_text(dir / "ragged.csv", "1,2,3\n0,1\n");
    CHECK_THROWS_WITH_AS(load_csv(dir / "ragged.csv"), doctest::Contains(":2:"), FormatError);
    testing::write_text(dir / "text.csv", "1,2,x\n");
    CHECK_THROWS_WITH_AS(load_csv(dir / "text.csv"), doctest::Contains(":1:"), FormatError);
    CHECK_THROWS_AS(load_csv(dir / "missing.csv"), FormatError);
}

TEST_CASE("feature scaling to the unit interval") {
    Dataset d;
    d.dim = 2;
    d.append(std::vector<double>{-2.0, 0.0}, 0);
    d.append(std::vector<double>{2.0, 1.0}, 1);
    scale_features_unit(d);
    CHECK(d.features == std::vector<double>{0.0, 0.5, 1.0, 0.75});
    const auto again = d.features;
    scale_features_unit(d);
    CHECK(d.features == again);
}
