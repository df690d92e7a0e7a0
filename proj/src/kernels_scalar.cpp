#include "onebit_fl/kernels.hpp"

namespace onebit::kernels::scalar {

void fwht(double* x, std::size_t n) {
    for (std::size_t h = 1; h < n; h *= 2) {
        for (std::size_t i = 0; i < n; i += 2 * h) {
            for (std::size_t j = i; j < i + h; ++j) {
                const double a = x[j];
                const double b = x[j + h];
                x[j] = a + b;
                x[j + h] = a - b;
            }
        }
    }
}

void multiply(double* x, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= y[i];
}

void scale(double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void axpy(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
    // Lane-interleaved accumulation, mirrored exactly by the AVX2 kernel.
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        lane[0] += a[i] * b[i];
        lane[1] += a[i + 1] * b[i + 1];
        lane[2] += a[i + 2] * b[i + 2];
        lane[3] += a[i + 3] * b[i + 3];
    }
    double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void pack_nonnegative(const double* z, std::size_t n, std::uint8_t* out) {
    const std::size_t bytes = (n + 7) / 8;
    for (std::size_t b = 0; b < bytes; ++b) out[b] = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (z[i] >= 0.0) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
}

}  // namespace onebit::kernels::scalar
