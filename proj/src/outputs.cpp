#include "splatctl/error.hpp"
#include "splatctl/harness.hpp"

#include "text_util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace splatctl {

using text::format_double;
using ordered_json = nlohmann::ordered_json;

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
    std::string out = "# splatctl metrics schema " + std::to_string(kMetricsSchemaVersion) + "\n";
    out +=
        "step,n_primitives,loss_vs_reference,pseudo_loss,lambda,grad_norm_mean,mhat_mean,mhat_median,"
        "mhat_q90,snr_mean,snr_median,snr_q90,n_selected,n_split,n_cloned,n_pruned,n_reset,cum_split,"
        "cum_cloned,cum_pruned,storage_bytes,cap_hit\n";
    for (const MetricsRecord& r : records) {
        out += std::to_string(r.step) + ',' + std::to_string(r.n_primitives) + ',' +
               format_double(r.loss_vs_reference) + ',' + format_double(r.pseudo_loss) + ',' +
               format_double(r.lambda) + ',' + format_double(r.grad_norm_mean) + ',' +
               format_double(r.mhat_mean) + ',' + format_double(r.mhat_median) + ',' +
               format_double(r.mhat_q90) + ',' + format_double(r.snr_mean) + ',' +
               format_double(r.snr_median) + ',' + format_double(r.snr_q90) + ',' +
               std::to_string(r.n_selected) + ',' + std::to_string(r.n_split) + ',' +
               std::to_string(r.n_cloned) + ',' + std::to_string(r.n_pruned) + ',' +
               std::to_string(r.n_reset) + ',' + std::to_string(r.cum_split) + ',' +
               std::to_string(r.cum_cloned) + ',' + std::to_string(r.cum_pruned) + ',' +
               std::to_string(r.storage_bytes) + ',' + (r.cap_hit ? "1" : "0") + '\n';
    }
    return out;
}

std::string events_jsonl(const std::vector<RoundEvent>& events) {
    std::string out;
    for (const RoundEvent& e : events) {
        ordered_json j;
        j["step"] = e.step;
        j["policy"] = to_string(e.policy);
        j["densify"] = e.densify;
        j["reset"] = e.reset;
        j["n_selected"] = e.n_selected;
        j["n_split"] = e.n_split;
        j["n_clone"] = e.n_clone;
        j["n_pruned"] = e.n_pruned;
        j["n_reset"] = e.n_reset;
        if (e.quantile_value) {
            j["quantile_value"] = *e.quantile_value;
        } else {
            j["quantile_value"] = nullptr;
        }
        j["cap_hit"] = e.cap_hit;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string selections_jsonl(const std::vector<SelectionFootprint>& selections) {
    std::string out;
    for (const SelectionFootprint& s : selections) {
        ordered_json j;
        j["step"] = s.step;
        ordered_json prims = ordered_json::array();
        for (const Primitive& p : s.selected) {
            prims.push_back({p.position.x, p.position.y, p.scale, p.opacity});
        }
        j["selected"] = std::move(prims);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<SelectionFootprint> parse_selections_jsonl(const std::string& content) {
    std::vector<SelectionFootprint> out;
    std::istringstream in(content);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            SelectionFootprint s;
            s.step = j.at("step").get<std::int64_t>();
            for (const auto& p : j.at("selected")) {
                if (!p.is_array() || p.size() != 4) throw FormatError("selected entries are [x, y, scale, opacity]");
                Primitive prim;
                prim.position = {p[0].get<double>(), p[1].get<double>()};
                prim.scale = p[2].get<double>();
                prim.opacity = p[3].get<double>();
                s.selected.push_back(prim);
            }
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("selections line " + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError("selections line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

RenderGrid selection_mask(const std::vector<Primitive>& selected, GridDims dims) {
    RenderGrid mask(dims);
    for (const Primitive& p : selected) {
        const double r = 2.0 * p.scale;
        const int cx = static_cast<int>(std::floor(p.position.x * dims.width));
        const int cy = static_cast<int>(std::floor(p.position.y * dims.height));
        if (cx >= 0 && cy >= 0 && cx < dims.width && cy < dims.height) mask.at(cx, cy) = 1.0;
        const int x0 = std::max(0, static_cast<int>(std::floor((p.position.x - r) * dims.width)));
        const int x1 = std::min(dims.width - 1, static_cast<int>(std::ceil((p.position.x + r) * dims.width)));
        const int y0 = std::max(0, static_cast<int>(std::floor((p.position.y - r) * dims.height)));
        const int y1 = std::min(dims.height - 1, static_cast<int>(std::ceil((p.position.y + r) * dims.height)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = (x + 0.5) / dims.width - p.position.x;
                const double dy = (y + 0.5) / dims.height - p.position.y;
                if (dx * dx + dy * dy <= r * r) mask.at(x, y) = 1.0;
            }
        }
    }
    return mask;
}

std::vector<std::filesystem::path> export_masks(const std::vector<SelectionFootprint>& selections,
                                                GridDims dims, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    std::vector<std::filesystem::path> paths;
    int round = 0;
    for (const SelectionFootprint& s : selections) {
        char name[32];
        std::snprintf(name, sizeof name, "round_%04d.pgm", round++);
        const std::filesystem::path p = dir / name;
        write_pgm(p, selection_mask(s.selected, dims));
        paths.push_back(p);
    }
    return paths;
}

std::string run_report(const RunResult& r) {
    const Scenario& s = r.scenario;
    std::size_t peak = 0;
    for (const RoundEvent& e : r.events) peak = std::max(peak, e.n_split + e.n_clone);
    std::ostringstream o;
    o << "controller        " << to_string(s.controller) << '\n';
    o << "reference         " << s.reference << " (" << to_string(s.mode) << ")\n";
    o << "grid              " << to_string(s.grid) << '\n';
    o << "seed              " << s.seed << '\n';
    o << "kernels           " << r.kernel_name << '\n';
    o << "steps             " << r.last_step << " of " << s.schedule.total_steps << '\n';
    if (r.noise_floor) o << "noise floor       " << format_double(*r.noise_floor) << '\n';
    if (s.controller == Policy::kBaseline) o << "tau_pos           " << format_double(s.control.tau_pos) << '\n';
    if (s.controller == Policy::kCadam && s.control.gate == CadamGate::kMomentumOnly) {
        o << "tau_momentum      " << format_double(s.control.tau_momentum) << '\n';
    }
    o << "initial count     " << r.initial.size() << '\n';
    o << "final count       " << r.final_count() << '\n';
    o << "final loss        " << format_double(r.final_loss()) << '\n';
    o << "storage bytes     " << storage_bytes(r.final_population) << '\n';
    o << "densified         " << r.total_densified() << " (peak round " << peak << ")\n";
    o << "cap hit           " << (r.cap_hit ? "yes at step " + std::to_string(r.cap_step) : std::string("no"))
      << '\n';
    return o.str();
}

void write_run_outputs(const RunResult& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    write_file(dir / "metrics.csv", metrics_csv(r.metrics));
    write_file(dir / "events.jsonl", events_jsonl(r.events));
    write_file(dir / "selections.jsonl", selections_jsonl(r.selections));
    write_file(dir / "final.ply", to_ply_ascii(r.final_population));
    const std::vector<MomentState> states = r.moments.to_states();
    write_file(dir / "final.snap", to_snapshot(r.final_population, states));
    write_pgm(dir / "render_final.pgm", r.final_render);
    write_file(dir / "scenario.scn", format_scenario(r.scenario));
    if (r.scenario.write_masks) export_masks(r.selections, r.scenario.grid, dir / "masks");
    write_file(dir / "report.txt", run_report(r));
}

} // namespace splatctl
