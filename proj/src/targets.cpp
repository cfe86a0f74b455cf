#include "splatctl/error.hpp"
#include "splatctl/toysplat.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace splatctl {

TargetMode parse_target_mode(const std::string& name) {
    if (name == "reconstruction") return TargetMode::kReconstruction;
    if (name == "generative") return TargetMode::kGenerative;
    throw ConfigError("unknown target mode '" + name + "' (expected reconstruction or generative)");
}

std::string to_string(TargetMode mode) {
    return mode == TargetMode::kReconstruction ? "reconstruction" : "generative";
}

void TargetModel::validate() const {
    if (reference.pixels.empty()) throw ConfigError("target reference image is empty");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(magnitude_jitter_sigma >= 0.0)) throw ConfigError("magnitude_jitter_sigma must be >= 0");
    if (!(view_jitter >= 0.0)) throw ConfigError("view_jitter must be >= 0");
    for (const double v : reference.pixels) {
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("reference pixels must lie in [0,1]");
    }
}

namespace {

double bilinear(const RenderGrid& img, double u, double v) {
    // (u, v) in scene units; pixel centres sit at (k + 0.5) / W.
    const double fx = u * img.width - 0.5;
    const double fy = v * img.height - 0.5;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0;
    const double ty = fy - y0;
    auto px = [&](int x, int y) {
        return (x < 0 || y < 0 || x >= img.width || y >= img.height) ? 0.0 : img.at(x, y);
    };
    return (1 - ty) * ((1 - tx) * px(x0, y0) + tx * px(x0 + 1, y0)) +
           ty * ((1 - tx) * px(x0, y0 + 1) + tx * px(x0 + 1, y0 + 1));
}

RenderGrid jitter_view(const RenderGrid& ref, double amplitude, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double tx = amplitude * n(rng);
    const double ty = amplitude * n(rng);
    const double angle = amplitude * n(rng);
    const double zoom = 1.0 + amplitude * n(rng);
    const double ca = std::cos(angle) / zoom;
    const double sa = std::sin(angle) / zoom;
    RenderGrid out(ref.dims());
    for (int y = 0; y < ref.height; ++y) {
        for (int x = 0; x < ref.width; ++x) {
            // Inverse map of: rotate+zoom about the centre, then translate.
            const double u = (x + 0.5) / ref.width - 0.5 - tx;
            const double v = (y + 0.5) / ref.height - 0.5 - ty;
            out.at(x, y) = bilinear(ref, 0.5 + ca * u + sa * v, 0.5 - sa * u + ca * v);
        }
    }
    return out;
}

} // namespace

PseudoTarget sample_pseudo_target(const TargetModel& model, std::int64_t step, std::uint64_t seed) {
    PseudoTarget out;
    if (model.mode == TargetMode::kReconstruction) {
        out.target = model.reference;
        return out;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32),
                      0x7a26e7u};
    std::mt19937_64 rng(seq);
    out.target = model.view_jitter > 0.0 ? jitter_view(model.reference, model.view_jitter, rng)
                                         : model.reference;
    std::normal_distribution<double> n(0.0, 1.0);
    if (model.noise_sigma > 0.0) {
        for (double& p : out.target.pixels) p += model.noise_sigma * n(rng);
    }
    out.lambda = model.magnitude_jitter_sigma > 0.0 ? std::exp(model.magnitude_jitter_sigma * n(rng)) : 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Builtin references
// ---------------------------------------------------------------------------

std::vector<std::string> builtin_reference_names() {
    return {"disk", "ring", "two-bar", "checker-corner"};
}

namespace {

bool inside(const std::string& name, double x, double y) {
    if (name == "disk") {
        return std::hypot(x - 0.5, y - 0.5) <= 0.3;
    }
    if (name == "ring") {
        const double r = std::hypot(x - 0.5, y - 0.5);
        return r >= 0.22 && r <= 0.32;
    }
    if (name == "two-bar") {
        const bool rows = y >= 0.15 && y <= 0.85;
        return rows && ((x >= 0.25 && x <= 0.31) || (x >= 0.62 && x <= 0.70));
    }
    if (name == "checker-corner") {
        if (x < 0.2 || y < 0.2 || x > 0.8 || y > 0.8) return false;
        const int cx = static_cast<int>((x - 0.2) / 0.15);
        const int cy = static_cast<int>((y - 0.2) / 0.15);
        return ((cx + cy) % 2) == 0;
    }
    throw ConfigError("unknown builtin reference '" + name + "'");
}

} // namespace

RenderGrid builtin_reference(const std::string& name, GridDims dims) {
    (void)inside(name, 0.5, 0.5); // validates the name
    constexpr int kSuper = 4;
    RenderGrid img(dims);
    for (int y = 0; y < dims.height; ++y) {
        for (int x = 0; x < dims.width; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double u = (x + (sx + 0.5) / kSuper) / dims.width;
                    const double v = (y + (sy + 0.5) / kSuper) / dims.height;
                    hits += inside(name, u, v) ? 1 : 0;
                }
            }
            img.at(x, y) = static_cast<double>(hits) / (kSuper * kSuper);
        }
    }
    return img;
}

RenderGrid load_reference(const std::string& spec, GridDims dims, const std::filesystem::path& base_dir) {
    constexpr std::string_view kPrefix = "builtin:";
    if (spec.rfind(kPrefix, 0) == 0) {
        return builtin_reference(spec.substr(kPrefix.size()), dims);
    }
    std::filesystem::path path(spec);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    RenderGrid img = read_pgm(path);
    if (img.dims() != dims) {
        throw ConfigError("reference '" + path.string() + "' is " + to_string(img.dims()) +
                          " but the grid is " + to_string(dims));
    }
    return img;
}

// ---------------------------------------------------------------------------
// PGM (P5, 8-bit)
// ---------------------------------------------------------------------------

std::string encode_pgm(const RenderGrid& grid) {
    std::string out = "P5\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) + "\n255\n";
    out.reserve(out.size() + grid.pixels.size());
    for (const double v : grid.pixels) {
        const double c = std::clamp(v, 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(c * 255.0))));
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, const RenderGrid& grid) {
    write_file(path, encode_pgm(grid));
}

RenderGrid decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_ws();
        long value = 0;
        std::size_t digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1'000'000) throw FormatError("PGM header value too large");
            ++pos;
            ++digits;
        }
        if (digits == 0) throw FormatError("malformed PGM header");
        return static_cast<int>(value);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)");
    pos = 2;
    const int w = read_int();
    const int h = read_int();
    const int maxval = read_int();
    if (w < 1 || h < 1) throw FormatError("PGM has empty dimensions");
    if (maxval < 1 || maxval > 255) throw FormatError("only 8-bit PGM is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PGM header");
    ++pos;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - pos < n) throw FormatError("PGM pixel data truncated");
    RenderGrid img(GridDims{w, h});
    for (std::size_t i = 0; i < n; ++i) {
        img.pixels[i] = static_cast<double>(bytes[pos + i]) / maxval;
    }
    return img;
}

RenderGrid read_pgm(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    try {
        return decode_pgm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace splatctl
