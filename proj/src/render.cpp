#include "splatctl/error.hpp"
#include "splatctl/kernels.hpp"
#include "splatctl/toysplat.hpp"

#include <cmath>
#include <numbers>

namespace splatctl {

GridDims parse_grid(const std::string& text) {
    const auto x = text.find_first_of("xX");
    if (x == std::string::npos) throw ConfigError("grid must look like WxH, got '" + text + "'");
    try {
        std::size_t used_w = 0;
        std::size_t used_h = 0;
        const std::string ws = text.substr(0, x);
        const std::string hs = text.substr(x + 1);
        GridDims d{std::stoi(ws, &used_w), std::stoi(hs, &used_h)};
        if (used_w != ws.size() || used_h != hs.size() || d.width < 1 || d.height < 1) {
            throw ConfigError("grid must look like WxH with positive sizes, got '" + text + "'");
        }
        return d;
    } catch (const std::logic_error&) {
        throw ConfigError("grid must look like WxH, got '" + text + "'");
    }
}

std::string to_string(GridDims dims) {
    return std::to_string(dims.width) + "x" + std::to_string(dims.height);
}

RenderGrid::RenderGrid(GridDims d, double fill)
    : width(d.width), height(d.height),
      pixels(static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height), fill) {}

double mse(const RenderGrid& a, const RenderGrid& b) {
    if (a.dims() != b.dims()) throw AlignmentError("mse: grid size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        s += d * d;
    }
    return a.pixels.empty() ? 0.0 : s / static_cast<double>(a.pixels.size());
}

namespace {

const kernels::KernelTable& resolve(const RenderOptions& opts) {
    return opts.kernels ? *opts.kernels : kernels::select(std::nullopt);
}

/// Separable footprint of one primitive on the pixel grid.
struct Footprint {
    int x0 = 0, x1 = -1; // inclusive pixel range
    int y0 = 0, y1 = -1;
    std::vector<double> dx, ex, dy, ey;

    [[nodiscard]] bool empty() const { return x1 < x0 || y1 < y0; }
    [[nodiscard]] int nx() const { return x1 - x0 + 1; }
    [[nodiscard]] int ny() const { return y1 - y0 + 1; }
};

void axis_range(double mu, double radius, int n, int& lo, int& hi) {
    const double a = std::ceil((mu - radius) * n - 0.5);
    const double b = std::floor((mu + radius) * n - 0.5);
    lo = a < 0.0 ? 0 : (a > n ? n : static_cast<int>(a));
    hi = b > n - 1 ? n - 1 : (b < -1.0 ? -1 : static_cast<int>(b));
}

void build(Footprint& f, const Primitive& p, GridDims dims, double cutoff,
           const kernels::KernelTable& k) {
    const double radius = cutoff * p.scale;
    axis_range(p.position.x, radius, dims.width, f.x0, f.x1);
    axis_range(p.position.y, radius, dims.height, f.y0, f.y1);
    if (f.empty()) return;
    const double c = 1.0 / (2.0 * p.scale * p.scale);
    f.dx.resize(static_cast<std::size_t>(f.nx()));
    f.ex.resize(f.dx.size());
    for (int i = 0; i < f.nx(); ++i) {
        f.dx[static_cast<std::size_t>(i)] = (f.x0 + i + 0.5) / dims.width - p.position.x;
    }
    k.gaussian_profile(f.dx.data(), f.dx.size(), c, f.ex.data());
    f.dy.resize(static_cast<std::size_t>(f.ny()));
    f.ey.resize(f.dy.size());
    for (int j = 0; j < f.ny(); ++j) {
        f.dy[static_cast<std::size_t>(j)] = (f.y0 + j + 0.5) / dims.height - p.position.y;
    }
    k.gaussian_profile(f.dy.data(), f.dy.size(), c, f.ey.data());
}

} // namespace

RenderGrid render(const Population& pop, GridDims dims, const RenderOptions& opts) {
    const kernels::KernelTable& k = resolve(opts);
    RenderGrid img(dims);
    Footprint f;
    for (const Primitive& p : pop.primitives()) {
        build(f, p, dims, opts.cutoff_sigmas, k);
        if (f.empty()) continue;
        for (int j = 0; j < f.ny(); ++j) {
            double* row = img.pixels.data() + static_cast<std::size_t>(f.y0 + j) * dims.width + f.x0;
            k.axpy(row, f.ex.data(), f.ex.size(), p.opacity * f.ey[static_cast<std::size_t>(j)]);
        }
    }
    return img;
}

std::vector<PrimitiveGrad> residual_grads(const Population& pop, const RenderGrid& residual,
                                          const RenderOptions& opts) {
    const kernels::KernelTable& k = resolve(opts);
    const GridDims dims = residual.dims();
    const double norm = 2.0 / static_cast<double>(residual.pixels.size());
    std::vector<PrimitiveGrad> grads(pop.size());
    Footprint f;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const Primitive& p = pop[i];
        build(f, p, dims, opts.cutoff_sigmas, k);
        if (f.empty()) continue;
        double s0 = 0.0, sx = 0.0, sy = 0.0, s2 = 0.0;
        for (int j = 0; j < f.ny(); ++j) {
            const double* row = residual.pixels.data() + static_cast<std::size_t>(f.y0 + j) * dims.width + f.x0;
            const kernels::RowSums rs = k.row_moments(row, f.ex.data(), f.dx.data(), f.ex.size());
            const double ey = f.ey[static_cast<std::size_t>(j)];
            const double dy = f.dy[static_cast<std::size_t>(j)];
            s0 += ey * rs.w;
            sx += ey * rs.wd;
            sy += ey * dy * rs.w;
            s2 += ey * (rs.wdd + dy * dy * rs.w);
        }
        const double inv_s2 = 1.0 / (p.scale * p.scale);
        PrimitiveGrad& g = grads[i];
        g.opacity = norm * s0;
        g.position.x = norm * p.opacity * sx * inv_s2;
        g.position.y = norm * p.opacity * sy * inv_s2;
        g.scale = norm * p.opacity * s2 * inv_s2 / p.scale;
    }
    return grads;
}

LossAndGrads loss_and_grads(const Population& pop, const RenderGrid& target, const RenderOptions& opts) {
    RenderGrid r = render(pop, target.dims(), opts);
    double loss = 0.0;
    for (std::size_t i = 0; i < r.pixels.size(); ++i) {
        r.pixels[i] -= target.pixels[i];
        loss += r.pixels[i] * r.pixels[i];
    }
    LossAndGrads out;
    out.loss = r.pixels.empty() ? 0.0 : loss / static_cast<double>(r.pixels.size());
    out.grads = residual_grads(pop, r, opts);
    return out;
}

double predicted_noise_floor(const Population& pop, GridDims dims, const TargetModel& model,
                             const RenderOptions& opts) {
    if (pop.empty() || model.mode == TargetMode::kReconstruction) return 0.0;
    const kernels::KernelTable& k = resolve(opts);
    const double hw = static_cast<double>(dims.width) * dims.height;
    const double lambda_mean = std::exp(0.5 * model.magnitude_jitter_sigma * model.magnitude_jitter_sigma);
    double total = 0.0;
    Footprint f;
    for (const Primitive& p : pop.primitives()) {
        build(f, p, dims, opts.cutoff_sigmas, k);
        if (f.empty()) continue;
        // tr(C) = (2 sigma_n a / (HW s^2))^2 * sum G^2 |p - mu|^2
        double sum = 0.0;
        for (int j = 0; j < f.ny(); ++j) {
            const double ey2 = f.ey[static_cast<std::size_t>(j)] * f.ey[static_cast<std::size_t>(j)];
            const double dy2 = f.dy[static_cast<std::size_t>(j)] * f.dy[static_cast<std::size_t>(j)];
            for (int i = 0; i < f.nx(); ++i) {
                const double ex2 = f.ex[static_cast<std::size_t>(i)] * f.ex[static_cast<std::size_t>(i)];
                const double dx2 = f.dx[static_cast<std::size_t>(i)] * f.dx[static_cast<std::size_t>(i)];
                sum += ey2 * ex2 * (dx2 + dy2);
            }
        }
        const double c = 2.0 * model.noise_sigma * p.opacity / (hw * p.scale * p.scale);
        const double trace = c * c * sum;
        total += std::sqrt(std::numbers::pi / 2.0) * std::sqrt(trace / 2.0);
    }
    return lambda_mean * total / static_cast<double>(pop.size());
}

} // namespace splatctl
