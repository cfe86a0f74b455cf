#include "splatctl/error.hpp"
#include "splatctl/harness.hpp"
#include "splatctl/quantile.hpp"

#include "text_util.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

namespace splatctl {

namespace {

[[noreturn]] void bad_line(int lineno, const std::string& what) {
    throw FormatError("trace line " + std::to_string(lineno) + ": " + what);
}

} // namespace

GradientTrace parse_trace(const std::string& content) {
    GradientTrace trace;
    std::istringstream in(content);
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            bad_line(lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) bad_line(lineno, "expected a JSON object");
        if (!have_header) {
            if (!j.contains("ids") || !j["ids"].is_array()) bad_line(lineno, "first record must be {\"ids\": [...]}");
            for (const auto& id : j["ids"]) {
                if (!id.is_number_unsigned()) bad_line(lineno, "ids must be non-negative integers");
                const PrimitiveId v = id.get<PrimitiveId>();
                if (!trace.ids.empty() && v <= trace.ids.back()) bad_line(lineno, "ids must be strictly increasing");
                trace.ids.push_back(v);
            }
            have_header = true;
            continue;
        }
        if (!j.contains("step") || !j["step"].is_number_integer()) bad_line(lineno, "missing integer \"step\"");
        if (!j.contains("grads") || !j["grads"].is_array()) bad_line(lineno, "missing \"grads\" array");
        const std::int64_t step = j["step"].get<std::int64_t>();
        if (!trace.steps.empty() && step <= trace.steps.back()) bad_line(lineno, "steps must be strictly increasing");
        const auto& g = j["grads"];
        if (g.size() != trace.ids.size()) {
            bad_line(lineno, "expected " + std::to_string(trace.ids.size()) + " gradients, got " +
                                 std::to_string(g.size()));
        }
        std::vector<Vec2> row;
        row.reserve(g.size());
        for (const auto& e : g) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
                bad_line(lineno, "each gradient must be [gx, gy]");
            }
            row.push_back({e[0].get<double>(), e[1].get<double>()});
        }
        trace.steps.push_back(step);
        trace.grads.push_back(std::move(row));
    }
    return trace;
}

GradientTrace load_trace(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    try {
        return parse_trace(std::string(bytes.begin(), bytes.end()));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string format_trace(const GradientTrace& trace) {
    std::string out = "{\"ids\":[";
    for (std::size_t i = 0; i < trace.ids.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(trace.ids[i]);
    }
    out += "]}\n";
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        out += "{\"step\":" + std::to_string(trace.steps[t]) + ",\"grads\":[";
        for (std::size_t i = 0; i < trace.grads[t].size(); ++i) {
            if (i) out += ',';
            out += '[' + text::format_double(trace.grads[t][i].x) + ',' + text::format_double(trace.grads[t][i].y) + ']';
        }
        out += "]}\n";
    }
    return out;
}

std::vector<ReplayRecord> replay_trace(const GradientTrace& trace, Policy policy, const ControllerConfig& cfg,
                                       const MomentConfig& mcfg) {
    cfg.validate();
    mcfg.validate();
    const std::size_t n = trace.ids.size();
    MomentBank bank(n);
    BaselineState base(n);
    const kernels::KernelTable& k = kernels::select(std::nullopt);
    std::vector<std::uint8_t> poisoned(n);
    std::vector<ReplayRecord> out;
    std::vector<double> norms(n), snr(n);
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        std::fill(poisoned.begin(), poisoned.end(), 0);
        bank.update_all(trace.grads[t], mcfg, k, poisoned);
        if (policy == Policy::kBaseline) baseline_accumulate(base, trace.grads[t]);

        ReplayRecord r;
        r.step = trace.steps[t];
        r.n_primitives = n;
        bank.corrected_stats(mcfg, norms, snr);
        if (n > 0) {
            r.snr_mean = std::accumulate(snr.begin(), snr.end(), 0.0) / static_cast<double>(n);
            r.snr_median = quantile_linear(snr, 0.5);
        }
        const bool round = (t + 1) % static_cast<std::size_t>(cfg.densify_interval) == 0;
        if (policy == Policy::kBaseline) {
            const std::vector<double> a = base.metric();
            if (n > 0) r.metric_mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
            if (round) {
                const Mask m = baseline_select(base, cfg);
                r.n_selected = static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
            }
        } else {
            if (n > 0) r.metric_mean = std::accumulate(norms.begin(), norms.end(), 0.0) / static_cast<double>(n);
            if (round && policy == Policy::kCadam && n > 0) {
                const ControllerDecision d = cadam_select(bank, mcfg, cfg);
                r.n_selected = d.count(d.densify);
                if (std::isfinite(d.quantile_value)) r.quantile_value = d.quantile_value;
            }
        }
        out.push_back(r);
    }
    return out;
}

std::string replay_csv(const std::vector<ReplayRecord>& records) {
    std::string out = "# splatctl replay schema " + std::to_string(kMetricsSchemaVersion) + "\n";
    out += "step,n_primitives,n_selected,quantile_value,snr_mean,snr_median,metric_mean\n";
    for (const ReplayRecord& r : records) {
        out += std::to_string(r.step) + ',' + std::to_string(r.n_primitives) + ',' + std::to_string(r.n_selected) +
               ',' + (r.quantile_value ? text::format_double(*r.quantile_value) : std::string()) + ',' +
               text::format_double(r.snr_mean) + ',' + text::format_double(r.snr_median) + ',' +
               text::format_double(r.metric_mean) + '\n';
    }
    return out;
}

} // namespace splatctl
