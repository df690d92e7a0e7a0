#include <atomic>
#include <cstdlib>
#include <string>

#include "onebit_fl/error.hpp"
#include "onebit_fl/kernels.hpp"

namespace onebit::kernels {

#if defined(ONEBIT_FL_HAVE_AVX2)
namespace detail {
extern const KernelTable avx2_table;
}
#endif

namespace {

const KernelTable scalar_table{Isa::scalar,     scalar::fwht, scalar::multiply, scalar::scale,
                               scalar::axpy,    scalar::dot,  scalar::pack_nonnegative};

const KernelTable* select_default() noexcept {
    if (const char* env = std::getenv("ONEBIT_FL_ISA"); env != nullptr && std::string(env) == "scalar") {
        return &scalar_table;
    }
#if defined(ONEBIT_FL_HAVE_AVX2)
    if (supported(Isa::avx2)) return &detail::avx2_table;
#endif
    return &scalar_table;
}

std::atomic<const KernelTable*>& active_slot() noexcept {
    static std::atomic<const KernelTable*> slot{select_default()};
    return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool supported(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(ONEBIT_FL_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") != 0;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& table(Isa isa) {
    if (!supported(isa)) {
        throw InvalidArgument("kernel ISA not supported on this machine: " + std::string(isa_name(isa)));
    }
#if defined(ONEBIT_FL_HAVE_AVX2)
    if (isa == Isa::avx2) return detail::avx2_table;
#endif
    return scalar_table;
}

const KernelTable& active() noexcept { return *active_slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) { active_slot().store(&table(isa), std::memory_order_relaxed); }

}  // namespace onebit::kernels
