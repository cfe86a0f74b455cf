#include "tables.hpp"

#include "splatctl/error.hpp"

#include <cstdlib>

namespace splatctl::kernels {

std::string to_string(Isa isa) {
    switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    }
    return "unknown";
}

std::optional<Isa> parse_isa(const std::string& name) {
    if (name == "scalar") return Isa::kScalar;
    if (name == "avx2") return Isa::kAvx2;
    if (name == "auto" || name.empty()) return std::nullopt;
    throw ConfigError("unknown kernel variant '" + name + "' (expected auto, scalar or avx2)");
}

bool isa_supported(Isa isa) {
    switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2:
#if defined(SPLATCTL_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

Isa best_isa() {
    return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

const KernelTable& table(Isa isa) {
    if (!isa_supported(isa)) {
        throw ConfigError("kernel variant '" + to_string(isa) + "' is not supported on this CPU/build");
    }
    switch (isa) {
    case Isa::kScalar: return kScalarTable;
    case Isa::kAvx2:
#if defined(SPLATCTL_HAVE_AVX2)
        return kAvx2Table;
#else
        break;
#endif
    }
    return kScalarTable;
}

const KernelTable& select(std::optional<Isa> requested) {
    if (!requested) {
        if (const char* env = std::getenv("SPLATCTL_ISA")) {
            requested = parse_isa(env);
        }
    }
    return table(requested.value_or(best_isa()));
}

std::vector<Isa> available_isas() {
    std::vector<Isa> out{Isa::kScalar};
    if (isa_supported(Isa::kAvx2)) out.push_back(Isa::kAvx2);
    return out;
}

} // namespace splatctl::kernels
