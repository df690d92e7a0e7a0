#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace onebit {

/// Smallest power of two >= n (n >= 1).
std::size_t next_pow2(std::size_t n);

/// Orthonormal Walsh-Hadamard transform, in place. Length must be a power of
/// two; applies H with H = H^T = H^{-1}.
void fwht_in_place(std::span<double> x);

/// Structured random projection Phi = sqrt(n_pad/m) * S * H * D * P_pad.
///
/// D is a random +-1 diagonal, H the orthonormal Hadamard matrix of order
/// n_pad, S selects m distinct rows, P_pad zero-pads R^n into R^n_pad. All
/// randomness is a pure function of (seed, n, m): D comes from the
/// Stream::sign_flips stream and S from the Stream::sample_indices stream,
/// so every endpoint that knows the seed rebuilds the same operator.
///
/// Immutable after construction; forward/adjoint may be called concurrently.
class SketchOperator {
public:
    SketchOperator(std::uint64_t seed, std::size_t n, std::size_t m);

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t n() const noexcept { return n_; }
    std::size_t n_pad() const noexcept { return n_pad_; }
    std::size_t m() const noexcept { return m_; }
    /// sqrt(n_pad / m); the spectral norm C_Phi of the padded-domain operator.
    double scale() const noexcept { return scale_; }
    std::span<const double> sign_flips() const noexcept { return sign_flips_; }
    std::span<const std::uint32_t> sample_indices() const noexcept { return sample_indices_; }

    /// Phi w for w in R^n.
    std::vector<double> forward(std::span<const double> w) const;
    /// Same, reusing caller-owned scratch of any size (resized to n_pad).
    void forward(std::span<const double> w, std::span<double> out, std::vector<double>& scratch) const;

    /// Phi^T v for v in R^m.
    std::vector<double> adjoint(std::span<const double> v) const;
    void adjoint(std::span<const double> v, std::span<double> out, std::vector<double>& scratch) const;

    /// sqrt(n_pad/m) * S H D applied to an already padded vector of length n_pad.
    std::vector<double> forward_padded(std::span<const double> x) const;
    /// Adjoint of forward_padded; returns a vector of length n_pad.
    std::vector<double> adjoint_padded(std::span<const double> v) const;

private:
    void project_padded(std::span<double> work, std::span<double> out) const;
    void lift_padded(std::span<const double> v, std::span<double> work) const;

    std::uint64_t seed_;
    std::size_t n_;
    std::size_t n_pad_;
    std::size_t m_;
    double scale_;
    std::vector<double> sign_flips_;
    std::vector<std::uint32_t> sample_indices_;
};

SketchOperator create_operator(std::uint64_t seed, std::size_t n, std::size_t m);

/// Bit-packed vector of m signs; bit i (little-endian within byte,
/// byte-major) is 1 for +1 and 0 for -1. Padding bits are always zero.
class OneBitSketch {
public:
    OneBitSketch() = default;
    /// Takes ownership of a payload; throws CorruptPayload on size mismatch
    /// or non-zero padding bits.
    OneBitSketch(std::size_t m, std::vector<std::uint8_t> bytes);

    std::size_t m() const noexcept { return m_; }
    /// Bits charged to the communication ledger (exactly m).
    std::size_t bit_count() const noexcept { return m_; }
    std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

    int sign(std::size_t i) const noexcept { return ((bytes_[i / 8] >> (i % 8)) & 1u) ? 1 : -1; }
    std::vector<int> signs() const;
    /// Signs as doubles, for arithmetic.
    std::vector<double> values() const;

    static OneBitSketch from_signs(std::span<const int> signs);

    friend bool operator==(const OneBitSketch&, const OneBitSketch&) = default;

private:
    std::size_t m_ = 0;
    std::vector<std::uint8_t> bytes_;
};

/// Server consensus with entries in {-1, 0, +1}. All-zero is the round-0 state.
class ConsensusVector {
public:
    ConsensusVector() = default;
    explicit ConsensusVector(std::size_t m) : entries_(m, 0) {}
    /// Throws InvalidArgument if any entry is outside {-1, 0, +1}.
    explicit ConsensusVector(std::vector<std::int8_t> entries);

    std::size_t m() const noexcept { return entries_.size(); }
    std::span<const std::int8_t> entries() const noexcept { return entries_; }
    std::int8_t operator[](std::size_t i) const noexcept { return entries_[i]; }
    std::vector<double> values() const;
    std::size_t zero_count() const noexcept;

    friend bool operator==(const ConsensusVector&, const ConsensusVector&) = default;

private:
    std::vector<std::int8_t> entries_;
};

/// sign with sign(0) = +1 (client-side tie-break). Throws NumericError on NaN.
OneBitSketch quantize(std::span<const double> z);

// Wire formats. Messages carry an 8-byte little-endian m header.

std::vector<std::uint8_t> serialize_sketch(const OneBitSketch& s);
OneBitSketch deserialize_sketch(std::span<const std::uint8_t> bytes, std::size_t m);

std::vector<std::uint8_t> encode_sketch_message(const OneBitSketch& s);
OneBitSketch decode_sketch_message(std::span<const std::uint8_t> message);

/// Trit packing, four per byte, trit i in bits 2*(i%4)..2*(i%4)+1 of byte
/// i/4: 00 -> 0, 01 -> +1, 10 -> -1. The pattern 11 is rejected on decode.
std::vector<std::uint8_t> encode_consensus_message(const ConsensusVector& v);
ConsensusVector decode_consensus_message(std::span<const std::uint8_t> message);

/// Strict one-bit downlink: ties broken to +1, sent in the sketch format.
OneBitSketch to_onebit(const ConsensusVector& v);

}  // namespace onebit
