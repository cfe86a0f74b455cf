/// @file primitives.hpp
/// @brief Isotropic 2D Gaussian primitives, the population container and
///        its serialization (ASCII PLY and a versioned binary snapshot).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace splatctl {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// One isotropic splat in the unit square.
struct Primitive {
    Vec2 position;
    double scale = 0.05;   ///< isotropic standard deviation, scene units
    double opacity = 0.1;  ///< amplitude weight in [0,1]
    std::uint64_t age = 0; ///< optimization steps since creation

    friend bool operator==(const Primitive&, const Primitive&) = default;
};

using PrimitiveId = std::uint64_t;

/// Per-primitive flags (split/clone/prune/reset selections).
using Mask = std::vector<std::uint8_t>;

/// Describes how a structural operation rearranged the population.
///
/// `source[i]` is the pre-operation index whose per-primitive side state
/// (moments, optimizer slots, accumulators) carries over into slot `i`, or
/// -1 when slot `i` holds a newly created primitive that starts fresh.
struct Remap {
    std::vector<std::int64_t> source;

    static Remap identity(std::size_t n);
};

/// Reorders a side channel to follow a structural change.
template <typename T>
std::vector<T> remap_channel(const std::vector<T>& old, const Remap& remap, const T& fresh) {
    std::vector<T> out;
    out.reserve(remap.source.size());
    for (const std::int64_t s : remap.source) {
        out.push_back(s < 0 ? fresh : old[static_cast<std::size_t>(s)]);
    }
    return out;
}

/// Ordered primitive sequence with run-unique, never recycled ids.
///
/// Newly created primitives are appended, removals preserve relative
/// order, so the sequence is always sorted by ascending id.
class Population {
public:
    Population() = default;

    [[nodiscard]] std::size_t size() const { return primitives_.size(); }
    [[nodiscard]] bool empty() const { return primitives_.empty(); }

    [[nodiscard]] const std::vector<Primitive>& primitives() const { return primitives_; }
    [[nodiscard]] std::vector<Primitive>& primitives() { return primitives_; }
    [[nodiscard]] const std::vector<PrimitiveId>& ids() const { return ids_; }

    [[nodiscard]] const Primitive& operator[](std::size_t i) const { return primitives_[i]; }
    [[nodiscard]] Primitive& operator[](std::size_t i) { return primitives_[i]; }

    /// Next id that `append` will hand out.
    [[nodiscard]] PrimitiveId next_id() const { return next_id_; }

    PrimitiveId append(const Primitive& p);

    /// Keeps only entries whose flag is zero; returns the matching remap.
    Remap remove_if(std::span<const std::uint8_t> remove);

    /// Rebuilds a population from explicit parts (deserialization).
    static Population from_parts(std::vector<Primitive> prims, std::vector<PrimitiveId> ids,
                                 PrimitiveId next_id);

    friend bool operator==(const Population&, const Population&) = default;

private:
    std::vector<Primitive> primitives_;
    std::vector<PrimitiveId> ids_;
    PrimitiveId next_id_ = 0;
};

enum class InitLayout { kGrid, kUniformRandom, kDensity };

InitLayout parse_init_layout(const std::string& name);
std::string to_string(InitLayout layout);

struct InitSpec {
    std::size_t count = 16;
    InitLayout layout = InitLayout::kGrid;
    double scale = 0.08;
    double opacity = 0.1;
};

/// Creates the initial coarse population.
///
/// Grid layout places primitives on the centres of a ceil(sqrt(n)) square
/// lattice (row-major, truncated to n); uniform layout draws positions from
/// a generator seeded with `seed`. Throws ConfigError when `count` is 0.
Population spawn_initial(const InitSpec& spec, std::uint64_t seed);

/// As above; the density layout draws each position from a pixel chosen
/// with probability proportional to `density` (row-major, width x height,
/// non-negative), uniformly inside that pixel. Other layouts ignore it.
Population spawn_initial(const InitSpec& spec, std::uint64_t seed, std::span<const double> density,
                         int width, int height);

/// Throws Error describing the first primitive that breaks scale > 0,
/// opacity in [0,1], or a duplicate/unsorted id.
void audit_population(const Population& pop);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

struct MomentState;

/// Binary snapshot layout, little-endian:
///
///   header (32 bytes): magic "SPLTSNAP", u32 version, u32 flags,
///                      u64 count, u64 next_id
///   geometry record (48 bytes each): u64 id, f64 x, f64 y, f64 scale,
///                      f64 opacity, u64 age
///   moment record (40 bytes each, only when flags bit 0 is set):
///                      f64 m.x, f64 m.y, f64 v.x, f64 v.y, u64 steps
///
/// Geometry records for all primitives come first, then moment records.
namespace snapshot {
inline constexpr char kMagic[8] = {'S', 'P', 'L', 'T', 'S', 'N', 'A', 'P'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kFlagMoments = 1u;
inline constexpr std::size_t kHeaderBytes = 32;
inline constexpr std::size_t kGeometryRecordBytes = 48;
inline constexpr std::size_t kMomentRecordBytes = 40;
} // namespace snapshot

std::string to_ply_ascii(const Population& pop);

std::vector<std::uint8_t> to_snapshot(const Population& pop);
std::vector<std::uint8_t> to_snapshot(const Population& pop, std::span<const MomentState> moments);

struct Snapshot {
    Population population;
    std::vector<MomentState> moments; ///< empty when the snapshot carries none
};

/// Throws FormatError on bad magic, unknown version or truncated input.
Snapshot from_snapshot(std::span<const std::uint8_t> bytes);

/// Byte count of the geometry-only snapshot encoding of `pop`.
std::size_t storage_bytes(const Population& pop);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

} // namespace splatctl
