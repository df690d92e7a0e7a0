#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "onebit_fl/rng.hpp"
#include "onebit_fl/sketch.hpp"

namespace testing {

inline std::vector<double> gaussian(std::size_t n, onebit::CounterRng& rng, double scale = 1.0) {
    std::vector<double> x(n);
    for (auto& v : x) v = scale * rng.normal();
    return x;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Normalized Hadamard matrix entry H[i][j] = (-1)^popcount(i & j) / sqrt(N).
inline double hadamard(std::size_t i, std::size_t j, std::size_t N) {
    return (__builtin_popcountll(i & j) % 2 ? -1.0 : 1.0) / std::sqrt(static_cast<double>(N));
}

/// Dense m x n_pad matrix of the padded-domain operator, assembled from the
/// textbook definition rather than the fast transform.
inline std::vector<double> dense_padded(const onebit::SketchOperator& op) {
    const std::size_t N = op.n_pad();
    std::vector<double> M(op.m() * N);
    for (std::size_t r = 0; r < op.m(); ++r) {
        const std::size_t row = op.sample_indices()[r];
        for (std::size_t j = 0; j < N; ++j) M[r * N + j] = op.scale() * hadamard(row, j, N) * op.sign_flips()[j];
    }
    return M;
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("onebit_fl_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace testing
