#include "onebit_fl/sketch.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "onebit_fl/error.hpp"
#include "onebit_fl/kernels.hpp"
#include "onebit_fl/rng.hpp"

namespace onebit {

namespace {

constexpr std::size_t kMaxPadded = std::size_t{1} << 31;

void require_length(std::span<const double> x, std::size_t expected, const char* what) {
    if (x.size() != expected) {
        throw InvalidArgument(std::string(what) + ": expected length " + std::to_string(expected) + ", got " +
                              std::to_string(x.size()));
    }
}

void write_u64_le(std::vector<std::uint8_t>& out, std::uint64_t value) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::uint64_t read_u64_le(std::span<const std::uint8_t> in) {
    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return value;
}

}  // namespace

std::size_t next_pow2(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

void fwht_in_place(std::span<double> x) {
    if (!std::has_single_bit(x.size())) {
        throw InvalidArgument("fwht: length " + std::to_string(x.size()) + " is not a power of two");
    }
    const auto& k = kernels::active();
    k.fwht(x.data(), x.size());
    k.scale(x.data(), 1.0 / std::sqrt(static_cast<double>(x.size())), x.size());
}

SketchOperator::SketchOperator(std::uint64_t seed, std::size_t n, std::size_t m)
    : seed_(seed), n_(n), n_pad_(0), m_(m), scale_(0.0) {
    if (n == 0) throw ConfigError("sketch operator: model dimension n must be positive");
    n_pad_ = next_pow2(n);
    if (n_pad_ > kMaxPadded) throw ConfigError("sketch operator: n too large");
    if (m == 0 || m > n_pad_) {
        throw ConfigError("sketch operator: need 1 <= m <= n_pad (m=" + std::to_string(m) +
                          ", n_pad=" + std::to_string(n_pad_) + ")");
    }
    scale_ = std::sqrt(static_cast<double>(n_pad_) / static_cast<double>(m_));

    auto flips = CounterRng::derive(seed, Stream::sign_flips);
    sign_flips_.resize(n_pad_);
    for (auto& s : sign_flips_) s = flips.coin() ? 1.0 : -1.0;

    // Floyd's algorithm: m distinct draws from [0, n_pad), uniform over subsets.
    auto rows = CounterRng::derive(seed, Stream::sample_indices);
    std::vector<bool> taken(n_pad_, false);
    sample_indices_.reserve(m_);
    for (std::size_t j = n_pad_ - m_; j < n_pad_; ++j) {
        auto t = static_cast<std::size_t>(rows.uniform_below(j + 1));
        if (taken[t]) t = j;
        taken[t] = true;
        sample_indices_.push_back(static_cast<std::uint32_t>(t));
    }
    std::sort(sample_indices_.begin(), sample_indices_.end());
}

void SketchOperator::project_padded(std::span<double> work, std::span<double> out) const {
    const auto& k = kernels::active();
    k.multiply(work.data(), sign_flips_.data(), n_pad_);
    k.fwht(work.data(), n_pad_);
    // scale * (H_unnormalized / sqrt(n_pad)) = H_unnormalized / sqrt(m)
    const double factor = 1.0 / std::sqrt(static_cast<double>(m_));
    for (std::size_t i = 0; i < m_; ++i) out[i] = work[sample_indices_[i]] * factor;
}

void SketchOperator::lift_padded(std::span<const double> v, std::span<double> work) const {
    std::fill(work.begin(), work.end(), 0.0);
    const double factor = 1.0 / std::sqrt(static_cast<double>(m_));
    for (std::size_t i = 0; i < m_; ++i) work[sample_indices_[i]] = v[i] * factor;
    const auto& k = kernels::active();
    k.fwht(work.data(), n_pad_);
    k.multiply(work.data(), sign_flips_.data(), n_pad_);
}

void SketchOperator::forward(std::span<const double> w, std::span<double> out,
                             std::vector<double>& scratch) const {
    require_length(w, n_, "forward input");
    if (out.size() != m_) throw InvalidArgument("forward output: expected length " + std::to_string(m_));
    scratch.assign(n_pad_, 0.0);
    std::copy(w.begin(), w.end(), scratch.begin());
    project_padded(scratch, out);
}

std::vector<double> SketchOperator::forward(std::span<const double> w) const {
    std::vector<double> out(m_);
    std::vector<double> scratch;
    forward(w, out, scratch);
    return out;
}

void SketchOperator::adjoint(std::span<const double> v, std::span<double> out,
                             std::vector<double>& scratch) const {
    require_length(v, m_, "adjoint input");
    if (out.size() != n_) throw InvalidArgument("adjoint output: expected length " + std::to_string(n_));
    scratch.resize(n_pad_);
    lift_padded(v, scratch);
    std::copy_n(scratch.begin(), n_, out.begin());
}

std::vector<double> SketchOperator::adjoint(std::span<const double> v) const {
    std::vector<double> out(n_);
    std::vector<double> scratch;
    adjoint(v, out, scratch);
    return out;
}

std::vector<double> SketchOperator::forward_padded(std::span<const double> x) const {
    require_length(x, n_pad_, "forward_padded input");
    std::vector<double> work(x.begin(), x.end());
    std::vector<double> out(m_);
    project_padded(work, out);
    return out;
}

std::vector<double> SketchOperator::adjoint_padded(std::span<const double> v) const {
    require_length(v, m_, "adjoint_padded input");
    std::vector<double> work(n_pad_);
    lift_padded(v, work);
    return work;
}

SketchOperator create_operator(std::uint64_t seed, std::size_t n, std::size_t m) {
    return SketchOperator(seed, n, m);
}

// ---------------------------------------------------------------------------

OneBitSketch::OneBitSketch(std::size_t m, std::vector<std::uint8_t> bytes) : m_(m), bytes_(std::move(bytes)) {
    if (bytes_.size() != (m_ + 7) / 8) {
        throw CorruptPayload("sketch payload: expected " + std::to_string((m_ + 7) / 8) + " bytes for m=" +
                             std::to_string(m_) + ", got " + std::to_string(bytes_.size()));
    }
    if (m_ % 8 != 0 && (bytes_.back() >> (m_ % 8)) != 0) {
        throw CorruptPayload("sketch payload: non-zero padding bits");
    }
}

std::vector<int> OneBitSketch::signs() const {
    std::vector<int> out(m_);
    for (std::size_t i = 0; i < m_; ++i) out[i] = sign(i);
    return out;
}

std::vector<double> OneBitSketch::values() const {
    std::vector<double> out(m_);
    for (std::size_t i = 0; i < m_; ++i) out[i] = sign(i);
    return out;
}

OneBitSketch OneBitSketch::from_signs(std::span<const int> signs) {
    std::vector<std::uint8_t> bytes((signs.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < signs.size(); ++i) {
        if (signs[i] == 1) {
            bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        } else if (signs[i] != -1) {
            throw InvalidArgument("sketch sign outside {-1, +1}");
        }
    }
    return OneBitSketch(signs.size(), std::move(bytes));
}

ConsensusVector::ConsensusVector(std::vector<std::int8_t> entries) : entries_(std::move(entries)) {
    for (auto e : entries_) {
        if (e < -1 || e > 1) throw InvalidArgument("consensus entry outside {-1, 0, +1}");
    }
}

std::vector<double> ConsensusVector::values() const { return {entries_.begin(), entries_.end()}; }

std::size_t ConsensusVector::zero_count() const noexcept {
    return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), std::int8_t{0}));
}

OneBitSketch quantize(std::span<const double> z) {
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (std::isnan(z[i])) throw NumericError("quantize: NaN at coordinate " + std::to_string(i));
    }
    std::vector<std::uint8_t> bytes((z.size() + 7) / 8);
    kernels::active().pack_nonnegative(z.data(), z.size(), bytes.data());
    return OneBitSketch(z.size(), std::move(bytes));
}

std::vector<std::uint8_t> serialize_sketch(const OneBitSketch& s) { return {s.bytes().begin(), s.bytes().end()}; }

OneBitSketch deserialize_sketch(std::span<const std::uint8_t> bytes, std::size_t m) {
    return OneBitSketch(m, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

std::vector<std::uint8_t> encode_sketch_message(const OneBitSketch& s) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + s.bytes().size());
    write_u64_le(out, s.m());
    out.insert(out.end(), s.bytes().begin(), s.bytes().end());
    return out;
}

OneBitSketch decode_sketch_message(std::span<const std::uint8_t> message) {
    if (message.size() < 8) throw CorruptPayload("sketch message shorter than its 8-byte header");
    const std::uint64_t m = read_u64_le(message);
    if (m == 0 || (m + 7) / 8 != message.size() - 8) {
        throw CorruptPayload("sketch message: header m=" + std::to_string(m) + " does not match payload of " +
                             std::to_string(message.size() - 8) + " bytes");
    }
    return deserialize_sketch(message.subspan(8), static_cast<std::size_t>(m));
}

std::vector<std::uint8_t> encode_consensus_message(const ConsensusVector& v) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + (v.m() + 3) / 4);
    write_u64_le(out, v.m());
    out.resize(8 + (v.m() + 3) / 4, 0);
    for (std::size_t i = 0; i < v.m(); ++i) {
        const std::uint8_t code = v[i] == 0 ? 0b00 : (v[i] > 0 ? 0b01 : 0b10);
        out[8 + i / 4] |= static_cast<std::uint8_t>(code << (2 * (i % 4)));
    }
    return out;
}

ConsensusVector decode_consensus_message(std::span<const std::uint8_t> message) {
    if (message.size() < 8) throw CorruptPayload("consensus message shorter than its 8-byte header");
    const std::uint64_t m = read_u64_le(message);
    if ((m + 3) / 4 != message.size() - 8) {
        throw CorruptPayload("consensus message: header m=" + std::to_string(m) + " does not match payload of " +
                             std::to_string(message.size() - 8) + " bytes");
    }
    std::vector<std::int8_t> entries(m);
    for (std::size_t i = 0; i < m; ++i) {
        const unsigned code = (message[8 + i / 4] >> (2 * (i % 4))) & 0b11u;
        switch (code) {
            case 0b00: entries[i] = 0; break;
            case 0b01: entries[i] = 1; break;
            case 0b10: entries[i] = -1; break;
            default:
                throw CorruptPayload("consensus message: illegal trit code at index " + std::to_string(i) +
                                     " (byte offset " + std::to_string(8 + i / 4) + ")");
        }
    }
    if (m % 4 != 0 && (message.back() >> (2 * (m % 4))) != 0) {
        throw CorruptPayload("consensus message: non-zero padding bits");
    }
    return ConsensusVector(std::move(entries));
}

OneBitSketch to_onebit(const ConsensusVector& v) {
    std::vector<int> signs(v.m());
    for (std::size_t i = 0; i < v.m(); ++i) signs[i] = v[i] < 0 ? -1 : 1;
    return OneBitSketch::from_signs(signs);
}

}  // namespace onebit
