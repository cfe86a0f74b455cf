#include "splatctl/primitives.hpp"

#include "splatctl/error.hpp"
#include "splatctl/moments.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace splatctl {

Remap Remap::identity(std::size_t n) {
    Remap r;
    r.source.resize(n);
    for (std::size_t i = 0; i < n; ++i) r.source[i] = static_cast<std::int64_t>(i);
    return r;
}

PrimitiveId Population::append(const Primitive& p) {
    const PrimitiveId id = next_id_++;
    primitives_.push_back(p);
    ids_.push_back(id);
    return id;
}

Remap Population::remove_if(std::span<const std::uint8_t> remove) {
    if (remove.size() != primitives_.size()) {
        throw AlignmentError("remove mask has " + std::to_string(remove.size()) +
                             " entries for " + std::to_string(primitives_.size()) + " primitives");
    }
    Remap r;
    std::size_t out = 0;
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        if (remove[i]) continue;
        primitives_[out] = primitives_[i];
        ids_[out] = ids_[i];
        r.source.push_back(static_cast<std::int64_t>(i));
        ++out;
    }
    primitives_.resize(out);
    ids_.resize(out);
    return r;
}

Population Population::from_parts(std::vector<Primitive> prims, std::vector<PrimitiveId> ids,
                                  PrimitiveId next_id) {
    if (prims.size() != ids.size()) {
        throw AlignmentError("primitive/id count mismatch");
    }
    Population p;
    p.primitives_ = std::move(prims);
    p.ids_ = std::move(ids);
    p.next_id_ = next_id;
    return p;
}

InitLayout parse_init_layout(const std::string& name) {
    if (name == "grid") return InitLayout::kGrid;
    if (name == "uniform" || name == "uniform-random") return InitLayout::kUniformRandom;
    if (name == "density") return InitLayout::kDensity;
    throw ConfigError("unknown init layout '" + name + "' (expected grid, uniform or density)");
}

std::string to_string(InitLayout layout) {
    switch (layout) {
    case InitLayout::kGrid: return "grid";
    case InitLayout::kUniformRandom: return "uniform";
    case InitLayout::kDensity: return "density";
    }
    return "unknown";
}

Population spawn_initial(const InitSpec& spec, std::uint64_t seed) {
    return spawn_initial(spec, seed, {}, 0, 0);
}

Population spawn_initial(const InitSpec& spec, std::uint64_t seed, std::span<const double> density,
                         int width, int height) {
    if (spec.count == 0) throw ConfigError("initial population count must be >= 1");
    if (!(spec.scale > 0.0)) throw ConfigError("initial scale must be > 0");
    if (!(spec.opacity >= 0.0 && spec.opacity <= 1.0)) {
        throw ConfigError("initial opacity must lie in [0,1]");
    }

    Population pop;
    if (spec.layout == InitLayout::kGrid) {
        const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.count))));
        for (std::size_t i = 0; i < spec.count; ++i) {
            const std::size_t row = i / side;
            const std::size_t col = i % side;
            Primitive p;
            p.position = {(static_cast<double>(col) + 0.5) / static_cast<double>(side),
                          (static_cast<double>(row) + 0.5) / static_cast<double>(side)};
            p.scale = spec.scale;
            p.opacity = spec.opacity;
            pop.append(p);
        }
    } else if (spec.layout == InitLayout::kDensity) {
        if (width < 1 || height < 1 || density.size() != static_cast<std::size_t>(width) * height) {
            throw ConfigError("density layout needs a width x height density image");
        }
        double total = 0.0;
        for (const double d : density) {
            if (!(d >= 0.0) || !std::isfinite(d)) throw ConfigError("density must be finite and >= 0");
            total += d;
        }
        if (!(total > 0.0)) throw ConfigError("density layout needs a non-zero density image");
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          0xde25u};
        std::mt19937_64 rng(seq);
        std::discrete_distribution<std::size_t> pick(density.begin(), density.end());
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < spec.count; ++i) {
            const std::size_t k = pick(rng);
            Primitive p;
            p.position.x = (static_cast<double>(k % static_cast<std::size_t>(width)) + u(rng)) / width;
            p.position.y = (static_cast<double>(k / static_cast<std::size_t>(width)) + u(rng)) / height;
            p.scale = spec.scale;
            p.opacity = spec.opacity;
            pop.append(p);
        }
    } else {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          0x5eedu};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < spec.count; ++i) {
            Primitive p;
            p.position.x = u(rng);
            p.position.y = u(rng);
            p.scale = spec.scale;
            p.opacity = spec.opacity;
            pop.append(p);
        }
    }
    return pop;
}

void audit_population(const Population& pop) {
    const auto& ids = pop.ids();
    if (ids.size() != pop.size()) throw Error("audit: id list out of sync");
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const Primitive& p = pop[i];
        const std::string where = "audit: primitive id " + std::to_string(ids[i]);
        if (!(p.scale > 0.0) || !std::isfinite(p.scale)) throw Error(where + " has non-positive scale");
        if (!(p.opacity >= 0.0 && p.opacity <= 1.0)) throw Error(where + " has opacity outside [0,1]");
        if (!std::isfinite(p.position.x) || !std::isfinite(p.position.y)) {
            throw Error(where + " has a non-finite position");
        }
        if (i > 0 && ids[i] <= ids[i - 1]) throw Error(where + " breaks ascending id order");
        if (ids[i] >= pop.next_id()) throw Error(where + " is not below next_id");
    }
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

namespace {

void append_float(std::string& out, double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(value));
    out.append(buf, res.ptr);
}

} // namespace

std::string to_ply_ascii(const Population& pop) {
    std::string out;
    out += "ply\nformat ascii 1.0\n";
    out += "element vertex " + std::to_string(pop.size()) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    out += "property float scale\nproperty float opacity\nend_header\n";
    for (const Primitive& p : pop.primitives()) {
        append_float(out, p.position.x);
        out += ' ';
        append_float(out, p.position.y);
        out += " 0 ";
        append_float(out, p.scale);
        out += ' ';
        append_float(out, p.opacity);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary snapshot
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t b = 0; b < sizeof(U); ++b) {
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
        if (pos_ + sizeof(U) > bytes_.size()) {
            throw FormatError("snapshot truncated at byte " + std::to_string(pos_));
        }
        U bits = 0;
        for (std::size_t b = 0; b < sizeof(U); ++b) {
            bits |= static_cast<U>(bytes_[pos_ + b]) << (8 * b);
        }
        pos_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }

    void expect_magic() {
        if (bytes_.size() < sizeof(snapshot::kMagic) ||
            std::memcmp(bytes_.data(), snapshot::kMagic, sizeof(snapshot::kMagic)) != 0) {
            throw FormatError("not a splat snapshot (bad magic)");
        }
        pos_ = sizeof(snapshot::kMagic);
    }

    [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> encode(const Population& pop, const MomentState* moments) {
    std::vector<std::uint8_t> out;
    const std::size_t per = snapshot::kGeometryRecordBytes +
                            (moments ? snapshot::kMomentRecordBytes : 0);
    out.reserve(snapshot::kHeaderBytes + per * pop.size());
    for (const auto c : snapshot::kMagic) out.push_back(static_cast<std::uint8_t>(c));
    put<std::uint32_t>(out, snapshot::kVersion);
    put<std::uint32_t>(out, moments ? snapshot::kFlagMoments : 0u);
    put<std::uint64_t>(out, pop.size());
    put<std::uint64_t>(out, pop.next_id());
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const Primitive& p = pop[i];
        put<std::uint64_t>(out, pop.ids()[i]);
        put<double>(out, p.position.x);
        put<double>(out, p.position.y);
        put<double>(out, p.scale);
        put<double>(out, p.opacity);
        put<std::uint64_t>(out, p.age);
    }
    if (moments) {
        for (std::size_t i = 0; i < pop.size(); ++i) {
            const MomentState& s = moments[i];
            put<double>(out, s.m.x);
            put<double>(out, s.m.y);
            put<double>(out, s.v.x);
            put<double>(out, s.v.y);
            put<std::uint64_t>(out, s.steps);
        }
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> to_snapshot(const Population& pop) {
    return encode(pop, nullptr);
}

std::vector<std::uint8_t> to_snapshot(const Population& pop, std::span<const MomentState> moments) {
    if (moments.size() != pop.size()) {
        throw AlignmentError("snapshot: " + std::to_string(moments.size()) + " moment states for " +
                             std::to_string(pop.size()) + " primitives");
    }
    return encode(pop, moments.data());
}

Snapshot from_snapshot(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    in.expect_magic();
    const auto version = in.get<std::uint32_t>();
    if (version != snapshot::kVersion) {
        throw FormatError("unsupported snapshot version " + std::to_string(version));
    }
    const auto flags = in.get<std::uint32_t>();
    const auto count = in.get<std::uint64_t>();
    const auto next_id = in.get<std::uint64_t>();
    const bool has_moments = (flags & snapshot::kFlagMoments) != 0;
    const std::size_t per = snapshot::kGeometryRecordBytes +
                            (has_moments ? snapshot::kMomentRecordBytes : 0);
    if (count > in.remaining() / per || in.remaining() != count * per) {
        throw FormatError("snapshot payload size does not match count " + std::to_string(count));
    }

    std::vector<Primitive> prims(count);
    std::vector<PrimitiveId> ids(count);
    for (std::size_t i = 0; i < count; ++i) {
        ids[i] = in.get<std::uint64_t>();
        prims[i].position.x = in.get<double>();
        prims[i].position.y = in.get<double>();
        prims[i].scale = in.get<double>();
        prims[i].opacity = in.get<double>();
        prims[i].age = in.get<std::uint64_t>();
    }
    Snapshot snap;
    if (has_moments) {
        snap.moments.resize(count);
        for (auto& s : snap.moments) {
            s.m.x = in.get<double>();
            s.m.y = in.get<double>();
            s.v.x = in.get<double>();
            s.v.y = in.get<double>();
            s.steps = in.get<std::uint64_t>();
        }
    }
    snap.population = Population::from_parts(std::move(prims), std::move(ids), next_id);
    return snap;
}

std::size_t storage_bytes(const Population& pop) {
    return snapshot::kHeaderBytes + snapshot::kGeometryRecordBytes * pop.size();
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                   text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return bytes;
}

} // namespace splatctl
