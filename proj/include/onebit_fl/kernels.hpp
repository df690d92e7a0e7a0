#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Data-parallel inner loops used by the sketch operator and the models.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2
// variant selected at runtime. The variants are required to agree
// bit-for-bit: the AVX2 code performs the same IEEE operations in the same
// order as the scalar code (dot products use four interleaved partial sums
// in both), and the build disables FMA contraction.

namespace onebit::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
    Isa isa;
    /// Unnormalized in-place Walsh-Hadamard butterflies; n must be a power of two.
    void (*fwht)(double* x, std::size_t n);
    /// x[i] *= y[i]
    void (*multiply)(double* x, const double* y, std::size_t n);
    /// x[i] *= a
    void (*scale)(double* x, double a, std::size_t n);
    /// y[i] += a * x[i]
    void (*axpy)(double* y, double a, const double* x, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// Bit i of out (little-endian within byte) is set iff z[i] >= 0.
    /// Writes ceil(n/8) bytes; padding bits of the last byte are zero.
    void (*pack_nonnegative)(const double* z, std::size_t n, std::uint8_t* out);
};

bool supported(Isa isa) noexcept;

/// Kernel table for a specific ISA; throws InvalidArgument if unsupported.
const KernelTable& table(Isa isa);

/// Kernel table chosen at startup: AVX2 when the CPU supports it, unless the
/// environment variable ONEBIT_FL_ISA=scalar forces the reference path.
const KernelTable& active() noexcept;

/// Overrides the runtime selection (tests and benchmarks).
void set_active(Isa isa);

// Reference implementations, exposed for equivalence tests.
namespace scalar {
void fwht(double* x, std::size_t n);
void multiply(double* x, const double* y, std::size_t n);
void scale(double* x, double a, std::size_t n);
void axpy(double* y, double a, const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void pack_nonnegative(const double* z, std::size_t n, std::uint8_t* out);
}  // namespace scalar

}  // namespace onebit::kernels
