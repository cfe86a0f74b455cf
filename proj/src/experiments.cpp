#include "splatctl/error.hpp"
#include "splatctl/harness.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <sstream>

namespace splatctl {

using text::format_double;

namespace {

const std::set<std::string>& controller_keys() {
    static const std::set<std::string> keys = {
        "controller", "tau_q", "tau_snr", "tau_pos", "tau_pos_floor_multiple", "tau_momentum",
        "tau_momentum_floor_multiple", "gate", "selective_reset",
    };
    return keys;
}

std::map<std::string, std::string> as_map(const Scenario& s) {
    std::map<std::string, std::string> out;
    std::istringstream in(format_scenario(s));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        out[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return out;
}

/// Runs every scenario, at most `jobs` at a time. Results keep input order.
std::vector<RunResult> run_all(const std::vector<Scenario>& scenarios, int jobs) {
    std::vector<RunResult> out(scenarios.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < scenarios.size(); ++i) out[i] = run(scenarios[i]);
        return out;
    }
    std::size_t next = 0;
    while (next < scenarios.size()) {
        std::vector<std::future<RunResult>> batch;
        const std::size_t stop = std::min(scenarios.size(), next + static_cast<std::size_t>(jobs));
        for (std::size_t i = next; i < stop; ++i) {
            batch.push_back(std::async(std::launch::async, [&scenarios, i] { return run(scenarios[i]); }));
        }
        for (std::size_t i = next; i < stop; ++i) out[i] = batch[i - next].get();
        next = stop;
    }
    return out;
}

double safe_ratio(double b, double a) {
    if (a == b) return 1.0;
    return a == 0.0 ? std::numeric_limits<double>::infinity() : b / a;
}

std::string label_of(const Scenario& s) {
    std::string l = to_string(s.controller);
    if (s.controller == Policy::kCadam && s.control.gate == CadamGate::kMomentumOnly) l += "/momentum_only";
    if (s.controller == Policy::kCadam && !s.control.selective_reset) l += "/no_reset";
    return l;
}

} // namespace

void check_comparable(const Scenario& a, const Scenario& b) {
    const auto ma = as_map(a);
    const auto mb = as_map(b);
    std::vector<std::string> diffs;
    for (const auto& [key, value] : ma) {
        if (controller_keys().count(key)) continue;
        if (mb.at(key) != value) diffs.push_back(key + " (" + value + " vs " + mb.at(key) + ")");
    }
    if (a.base_dir != b.base_dir && a.reference.rfind("builtin:", 0) != 0 &&
        a.reference != "render:init") {
        diffs.push_back("reference base directory");
    }
    if (!diffs.empty()) {
        std::string msg = "scenarios differ outside the controller:";
        for (const std::string& d : diffs) msg += " " + d;
        throw ConfigError(msg);
    }
}

ComparisonReport compare(const Scenario& a, const Scenario& b, int jobs) {
    check_comparable(a, b);
    std::vector<RunResult> runs = run_all({a, b}, jobs);
    ComparisonReport rep;
    rep.label_a = label_of(a);
    rep.label_b = label_of(b);
    rep.a = std::move(runs[0]);
    rep.b = std::move(runs[1]);
    rep.count_ratio = safe_ratio(static_cast<double>(rep.b.final_count()), static_cast<double>(rep.a.final_count()));
    rep.loss_ratio = safe_ratio(rep.b.final_loss(), rep.a.final_loss());
    std::ostringstream v;
    v << rep.label_b << " keeps " << format_double(rep.count_ratio) << "x the primitives of " << rep.label_a
      << " at " << format_double(rep.loss_ratio) << "x its loss";
    if (rep.a.cap_hit) v << "; " << rep.label_a << " hit the growth cap";
    if (rep.b.cap_hit) v << "; " << rep.label_b << " hit the growth cap";
    rep.verdict = v.str();
    return rep;
}

std::string ComparisonReport::text() const {
    std::ostringstream o;
    o << "run               " << label_a << " | " << label_b << '\n';
    o << "final count       " << a.final_count() << " | " << b.final_count() << '\n';
    o << "final loss        " << format_double(a.final_loss()) << " | " << format_double(b.final_loss()) << '\n';
    o << "storage bytes     " << storage_bytes(a.final_population) << " | " << storage_bytes(b.final_population)
      << '\n';
    o << "densified         " << a.total_densified() << " | " << b.total_densified() << '\n';
    o << "cap hit           " << (a.cap_hit ? "yes" : "no") << " | " << (b.cap_hit ? "yes" : "no") << '\n';
    o << "count ratio       " << format_double(count_ratio) << '\n';
    o << "loss ratio        " << format_double(loss_ratio) << '\n';
    o << "verdict: " << verdict << '\n';
    return o.str();
}

std::string ComparisonReport::joined_csv() const {
    // Rows are joined on step; a run that stopped early leaves its columns empty.
    std::map<std::int64_t, std::pair<const MetricsRecord*, const MetricsRecord*>> rows;
    for (const MetricsRecord& r : a.metrics) rows[r.step].first = &r;
    for (const MetricsRecord& r : b.metrics) rows[r.step].second = &r;
    std::string out = "# splatctl comparison schema " + std::to_string(kMetricsSchemaVersion) + "\n";
    out += "step,n_primitives_" + label_a + ",loss_" + label_a + ",n_selected_" + label_a + ",n_primitives_" +
           label_b + ",loss_" + label_b + ",n_selected_" + label_b + "\n";
    auto cols = [](const MetricsRecord* r) {
        if (!r) return std::string(",,");
        return std::to_string(r->n_primitives) + ',' + format_double(r->loss_vs_reference) + ',' +
               std::to_string(r->n_selected);
    };
    for (const auto& [step, pair] : rows) {
        out += std::to_string(step) + ',' + cols(pair.first) + ',' + cols(pair.second) + '\n';
    }
    return out;
}

std::string sweep_axis_key(const std::string& axis) {
    if (axis == "tau_Q") return "tau_q";
    if (axis == "tau_SNR") return "tau_snr";
    if (axis == "sigma_ln") return "sigma_ln";
    if (axis == "tau_pos") return "tau_pos";
    const std::vector<std::string> keys = scenario_keys();
    if (std::find(keys.begin(), keys.end(), axis) != keys.end()) return axis;
    throw ConfigError("unknown sweep axis '" + axis + "'");
}

SweepReport sweep(const Scenario& base, const std::string& axis, const std::vector<std::string>& values,
                  int jobs) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const std::string key = sweep_axis_key(axis);
    std::vector<Scenario> scenarios;
    for (const std::string& v : values) {
        Scenario s = base;
        set_scenario_key(s, key, v);
        if (key == "tau_pos") s.tau_pos_floor_multiple.reset();
        s.validate();
        scenarios.push_back(std::move(s));
    }
    std::vector<RunResult> runs = run_all(scenarios, jobs);
    SweepReport rep;
    rep.axis = axis;
    for (std::size_t i = 0; i < values.size(); ++i) rep.rows.push_back({values[i], std::move(runs[i])});
    return rep;
}

std::string SweepReport::table() const {
    std::string out = axis + ",final_count,final_loss,densified,cap_hit\n";
    for (const SweepRow& r : rows) {
        out += r.value + ',' + std::to_string(r.result.final_count()) + ',' + format_double(r.result.final_loss()) +
               ',' + std::to_string(r.result.total_densified()) + ',' + (r.result.cap_hit ? "1" : "0") + '\n';
    }
    return out;
}

AblationVariant parse_ablation_variant(const std::string& name) {
    if (name == "full") return AblationVariant::kFull;
    if (name == "momentum_only") return AblationVariant::kMomentumOnly;
    if (name == "no_reset") return AblationVariant::kNoReset;
    throw ConfigError("unknown ablation variant '" + name + "' (expected full, momentum_only or no_reset)");
}

std::string to_string(AblationVariant v) {
    switch (v) {
    case AblationVariant::kFull: return "full";
    case AblationVariant::kMomentumOnly: return "momentum_only";
    case AblationVariant::kNoReset: return "no_reset";
    }
    return "unknown";
}

Scenario ablation_scenario(const Scenario& base, AblationVariant v) {
    if (base.controller != Policy::kCadam) throw ConfigError("ablations need controller = cadam");
    Scenario s = base;
    switch (v) {
    case AblationVariant::kFull: break;
    case AblationVariant::kMomentumOnly: s.control.gate = CadamGate::kMomentumOnly; break;
    case AblationVariant::kNoReset: s.control.selective_reset = false; break;
    }
    return s;
}

AblationReport ablate(const Scenario& base, const std::vector<AblationVariant>& variants, int jobs) {
    std::vector<Scenario> scenarios;
    for (const AblationVariant v : variants) scenarios.push_back(ablation_scenario(base, v));
    std::vector<RunResult> runs = run_all(scenarios, jobs);
    AblationReport rep;
    for (std::size_t i = 0; i < variants.size(); ++i) rep.runs.emplace_back(variants[i], std::move(runs[i]));
    return rep;
}

std::string AblationReport::growth_csv() const {
    std::map<std::int64_t, std::vector<std::string>> rows;
    for (std::size_t v = 0; v < runs.size(); ++v) {
        for (const MetricsRecord& r : runs[v].second.metrics) {
            auto& row = rows[r.step];
            row.resize(runs.size());
            row[v] = std::to_string(r.n_primitives);
        }
    }
    std::string out = "step";
    for (const auto& [variant, _] : runs) out += ",n_primitives_" + to_string(variant);
    out += '\n';
    for (auto& [step, row] : rows) {
        row.resize(runs.size());
        out += std::to_string(step);
        for (const std::string& c : row) out += ',' + c;
        out += '\n';
    }
    return out;
}

std::string AblationReport::table() const {
    std::string out = "variant,final_count,final_loss,densified,cap_hit\n";
    for (const auto& [variant, r] : runs) {
        out += to_string(variant) + ',' + std::to_string(r.final_count()) + ',' + format_double(r.final_loss()) +
               ',' + std::to_string(r.total_densified()) + ',' + (r.cap_hit ? "1" : "0") + '\n';
    }
    return out;
}

} // namespace splatctl
