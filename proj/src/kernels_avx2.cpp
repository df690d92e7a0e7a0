// Compiled with -mavx2 (no FMA) on x86-64 only; see src/CMakeLists.txt.
#include "onebit_fl/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace onebit::kernels::avx2 {

void fwht(double* x, std::size_t n) {
    if (n < 4) {
        scalar::fwht(x, n);
        return;
    }
    // Strides 1 and 2 stay inside a register.
    for (std::size_t i = 0; i < n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        // h = 1: [a b c d] -> [a+b, a-b, c+d, c-d]
        __m256d swap = _mm256_permute_pd(v, 0b0101);
        v = _mm256_blend_pd(_mm256_add_pd(v, swap), _mm256_sub_pd(swap, v), 0b1010);
        // h = 2: [a b c d] -> [a+c, b+d, a-c, b-d]
        swap = _mm256_permute2f128_pd(v, v, 0x01);
        v = _mm256_blend_pd(_mm256_add_pd(v, swap), _mm256_sub_pd(swap, v), 0b1100);
        _mm256_storeu_pd(x + i, v);
    }
    for (std::size_t h = 4; h < n; h *= 2) {
        for (std::size_t i = 0; i < n; i += 2 * h) {
            for (std::size_t j = i; j < i + h; j += 4) {
                const __m256d a = _mm256_loadu_pd(x + j);
                const __m256d b = _mm256_loadu_pd(x + j + h);
                _mm256_storeu_pd(x + j, _mm256_add_pd(a, b));
                _mm256_storeu_pd(x + j + h, _mm256_sub_pd(a, b));
            }
        }
    }
}

void multiply(double* x, const double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) x[i] *= y[i];
}

void scale(double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    }
    for (; i < n; ++i) x[i] *= a;
}

void axpy(double* y, double a, const double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void pack_nonnegative(const double* z, std::size_t n, std::uint8_t* out) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const int lo = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(z + i), zero, _CMP_GE_OQ));
        const int hi = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(z + i + 4), zero, _CMP_GE_OQ));
        out[i / 8] = static_cast<std::uint8_t>(lo | (hi << 4));
    }
    if (i < n) scalar::pack_nonnegative(z + i, n - i, out + i / 8);
}

}  // namespace onebit::kernels::avx2

namespace onebit::kernels::detail {

extern const KernelTable avx2_table;
const KernelTable avx2_table{Isa::avx2,       avx2::fwht, avx2::multiply, avx2::scale,
                             avx2::axpy,      avx2::dot,  avx2::pack_nonnegative};

}  // namespace onebit::kernels::detail

#endif
