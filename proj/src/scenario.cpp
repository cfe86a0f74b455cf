#include "splatctl/error.hpp"
#include "splatctl/harness.hpp"

#include "text_util.hpp"

#include <fstream>
#include <sstream>

namespace splatctl {

std::int64_t Scenario::densify_start() const {
    return schedule.densify_start >= 0 ? schedule.densify_start : control.densify_interval;
}

std::int64_t Scenario::densify_end() const {
    return schedule.densify_end >= 0 ? schedule.densify_end : (schedule.total_steps * 4) / 5;
}

void Scenario::validate() const {
    if (reference.empty()) throw ConfigError("reference must be builtin:<name>, render:init or a PGM path");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(magnitude_jitter_sigma >= 0.0)) throw ConfigError("sigma_ln must be >= 0");
    if (!(view_jitter >= 0.0)) throw ConfigError("view_jitter must be >= 0");
    if (grid.width < 1 || grid.height < 1) throw ConfigError("grid must be at least 1x1");
    if (init.count == 0) throw ConfigError("init_count must be >= 1");
    if (!(init.scale > 0.0)) throw ConfigError("init_scale must be > 0");
    if (!(init.opacity > 0.0 && init.opacity < 1.0)) throw ConfigError("init_opacity must lie in (0,1)");
    control.validate();
    moments.validate();
    optimizer.validate();
    if (schedule.total_steps < 1) throw ConfigError("total_steps must be >= 1");
    const std::int64_t start = densify_start();
    const std::int64_t end = densify_end();
    if (!(start <= end && end <= schedule.total_steps)) {
        throw ConfigError("schedule needs densify_start <= densify_end <= total_steps, got " +
                          std::to_string(start) + ", " + std::to_string(end) + ", " +
                          std::to_string(schedule.total_steps));
    }
    if (tau_pos_floor_multiple && !(*tau_pos_floor_multiple > 0.0)) {
        throw ConfigError("tau_pos_floor_multiple must be > 0");
    }
    if (tau_momentum_floor_multiple && !(*tau_momentum_floor_multiple > 0.0)) {
        throw ConfigError("tau_momentum_floor_multiple must be > 0");
    }
    if ((tau_pos_floor_multiple || tau_momentum_floor_multiple) && mode == TargetMode::kReconstruction) {
        throw ConfigError("floor-relative thresholds need a generative target (no noise floor otherwise)");
    }
    if (noise_floor_settle_steps < 0 || noise_floor_sample_steps < 1) {
        throw ConfigError("noise floor needs settle_steps >= 0 and sample_steps >= 1");
    }
    if (!(cutoff_sigmas >= 1.0)) throw ConfigError("cutoff_sigmas must be >= 1");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
}

namespace {

using text::format_double;
using text::parse_bool;
using text::parse_double;
using text::parse_int;
using text::parse_uint;

struct Key {
    const char* name;
    void (*set)(Scenario&, const std::string&);
    std::string (*get)(const Scenario&);
};

std::string opt_double(const std::optional<double>& v) {
    return v ? format_double(*v) : "none";
}

std::optional<double> parse_opt_double(const std::string& v, const char* what) {
    if (text::trim(v) == "none") return std::nullopt;
    return parse_double(v, what);
}

std::int64_t parse_step(const std::string& v, const char* what) {
    if (text::trim(v) == "auto") return -1;
    const std::int64_t x = parse_int(v, what);
    if (x < 0) throw ConfigError(std::string(what) + " must be >= 0 or auto");
    return x;
}

std::string step_text(std::int64_t v) {
    return v < 0 ? "auto" : std::to_string(v);
}

int parse_small_int(const std::string& v, const char* what) {
    const std::int64_t x = parse_int(v, what);
    if (x < 0 || x > 1'000'000'000) throw ConfigError(std::string(what) + " out of range");
    return static_cast<int>(x);
}

#define SPLATCTL_DOUBLE_KEY(key, field)                                                           \
    Key {                                                                                         \
        key, [](Scenario& s, const std::string& v) { s.field = parse_double(v, key); },          \
            [](const Scenario& s) { return format_double(s.field); }                             \
    }

#define SPLATCTL_INT_KEY(key, field)                                                              \
    Key {                                                                                         \
        key, [](Scenario& s, const std::string& v) { s.field = parse_small_int(v, key); },       \
            [](const Scenario& s) { return std::to_string(s.field); }                            \
    }

#define SPLATCTL_BOOL_KEY(key, field)                                                             \
    Key {                                                                                         \
        key, [](Scenario& s, const std::string& v) { s.field = parse_bool(v, key); },            \
            [](const Scenario& s) { return std::string(s.field ? "true" : "false"); }            \
    }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        // target
        Key{"reference", [](Scenario& s, const std::string& v) { s.reference = std::string(text::trim(v)); },
            [](const Scenario& s) { return s.reference; }},
        Key{"mode", [](Scenario& s, const std::string& v) { s.mode = parse_target_mode(std::string(text::trim(v))); },
            [](const Scenario& s) { return to_string(s.mode); }},
        SPLATCTL_DOUBLE_KEY("noise_sigma", noise_sigma),
        SPLATCTL_DOUBLE_KEY("sigma_ln", magnitude_jitter_sigma),
        SPLATCTL_DOUBLE_KEY("view_jitter", view_jitter),
        Key{"grid", [](Scenario& s, const std::string& v) { s.grid = parse_grid(std::string(text::trim(v))); },
            [](const Scenario& s) { return to_string(s.grid); }},
        // initial population
        Key{"init_count",
            [](Scenario& s, const std::string& v) { s.init.count = static_cast<std::size_t>(parse_uint(v, "init_count")); },
            [](const Scenario& s) { return std::to_string(s.init.count); }},
        Key{"init_layout",
            [](Scenario& s, const std::string& v) { s.init.layout = parse_init_layout(std::string(text::trim(v))); },
            [](const Scenario& s) { return to_string(s.init.layout); }},
        SPLATCTL_DOUBLE_KEY("init_scale", init.scale),
        SPLATCTL_DOUBLE_KEY("init_opacity", init.opacity),
        // controller
        Key{"controller",
            [](Scenario& s, const std::string& v) { s.controller = parse_policy(std::string(text::trim(v))); },
            [](const Scenario& s) { return to_string(s.controller); }},
        SPLATCTL_DOUBLE_KEY("tau_q", control.tau_q),
        SPLATCTL_DOUBLE_KEY("tau_snr", control.tau_snr),
        SPLATCTL_DOUBLE_KEY("tau_pos", control.tau_pos),
        Key{"tau_pos_floor_multiple",
            [](Scenario& s, const std::string& v) { s.tau_pos_floor_multiple = parse_opt_double(v, "tau_pos_floor_multiple"); },
            [](const Scenario& s) { return opt_double(s.tau_pos_floor_multiple); }},
        SPLATCTL_DOUBLE_KEY("tau_momentum", control.tau_momentum),
        Key{"tau_momentum_floor_multiple",
            [](Scenario& s, const std::string& v) {
                s.tau_momentum_floor_multiple = parse_opt_double(v, "tau_momentum_floor_multiple");
            },
            [](const Scenario& s) { return opt_double(s.tau_momentum_floor_multiple); }},
        Key{"gate",
            [](Scenario& s, const std::string& v) {
                const std::string_view t = text::trim(v);
                if (t == "quantile_snr") {
                    s.control.gate = CadamGate::kQuantileSnr;
                } else if (t == "momentum_only") {
                    s.control.gate = CadamGate::kMomentumOnly;
                } else {
                    throw ConfigError("gate must be quantile_snr or momentum_only, got '" + std::string(t) + "'");
                }
            },
            [](const Scenario& s) {
                return std::string(s.control.gate == CadamGate::kQuantileSnr ? "quantile_snr" : "momentum_only");
            }},
        SPLATCTL_BOOL_KEY("selective_reset", control.selective_reset),
        SPLATCTL_DOUBLE_KEY("tau_scale", control.tau_scale),
        SPLATCTL_DOUBLE_KEY("split_factor", control.split_factor),
        SPLATCTL_DOUBLE_KEY("prune_opacity", control.prune_opacity),
        SPLATCTL_DOUBLE_KEY("prune_scale_max", control.prune_scale_max),
        SPLATCTL_DOUBLE_KEY("reset_opacity", control.reset_opacity),
        Key{"max_primitives",
            [](Scenario& s, const std::string& v) {
                s.control.max_primitives = static_cast<std::size_t>(parse_uint(v, "max_primitives"));
            },
            [](const Scenario& s) { return std::to_string(s.control.max_primitives); }},
        // schedule
        Key{"total_steps",
            [](Scenario& s, const std::string& v) { s.schedule.total_steps = parse_int(v, "total_steps"); },
            [](const Scenario& s) { return std::to_string(s.schedule.total_steps); }},
        SPLATCTL_INT_KEY("densify_interval", control.densify_interval),
        Key{"densify_start",
            [](Scenario& s, const std::string& v) { s.schedule.densify_start = parse_step(v, "densify_start"); },
            [](const Scenario& s) { return step_text(s.schedule.densify_start); }},
        Key{"densify_end",
            [](Scenario& s, const std::string& v) { s.schedule.densify_end = parse_step(v, "densify_end"); },
            [](const Scenario& s) { return step_text(s.schedule.densify_end); }},
        SPLATCTL_INT_KEY("reset_interval", control.reset_interval),
        SPLATCTL_INT_KEY("warmup_steps", control.warmup_steps),
        // densification moments
        SPLATCTL_DOUBLE_KEY("beta1", moments.beta1),
        SPLATCTL_DOUBLE_KEY("beta2", moments.beta2),
        SPLATCTL_DOUBLE_KEY("epsilon", moments.epsilon),
        // parameter optimizer
        SPLATCTL_DOUBLE_KEY("lr_position", optimizer.lr_position),
        SPLATCTL_DOUBLE_KEY("lr_position_final", optimizer.lr_position_final),
        SPLATCTL_DOUBLE_KEY("lr_scale", optimizer.lr_scale),
        SPLATCTL_DOUBLE_KEY("lr_opacity", optimizer.lr_opacity),
        SPLATCTL_DOUBLE_KEY("adam_beta1", optimizer.beta1),
        SPLATCTL_DOUBLE_KEY("adam_beta2", optimizer.beta2),
        SPLATCTL_DOUBLE_KEY("adam_epsilon", optimizer.epsilon),
        // noise floor measurement
        Key{"noise_floor_settle_steps",
            [](Scenario& s, const std::string& v) { s.noise_floor_settle_steps = parse_int(v, "noise_floor_settle_steps"); },
            [](const Scenario& s) { return std::to_string(s.noise_floor_settle_steps); }},
        Key{"noise_floor_sample_steps",
            [](Scenario& s, const std::string& v) { s.noise_floor_sample_steps = parse_int(v, "noise_floor_sample_steps"); },
            [](const Scenario& s) { return std::to_string(s.noise_floor_sample_steps); }},
        // run
        Key{"seed", [](Scenario& s, const std::string& v) { s.seed = parse_uint(v, "seed"); },
            [](const Scenario& s) { return std::to_string(s.seed); }},
        SPLATCTL_DOUBLE_KEY("cutoff_sigmas", cutoff_sigmas),
        SPLATCTL_BOOL_KEY("stop_on_cap", stop_on_cap),
        Key{"log_every", [](Scenario& s, const std::string& v) { s.log_every = parse_int(v, "log_every"); },
            [](const Scenario& s) { return std::to_string(s.log_every); }},
        Key{"kernels",
            [](Scenario& s, const std::string& v) { s.kernels = kernels::parse_isa(std::string(text::trim(v))); },
            [](const Scenario& s) { return s.kernels ? kernels::to_string(*s.kernels) : std::string("auto"); }},
        SPLATCTL_BOOL_KEY("write_masks", write_masks),
    };
    return table;
}

#undef SPLATCTL_DOUBLE_KEY
#undef SPLATCTL_INT_KEY
#undef SPLATCTL_BOOL_KEY

} // namespace

void set_scenario_key(Scenario& s, const std::string& key, const std::string& value) {
    for (const Key& k : keys()) {
        if (key == k.name) {
            k.set(s, value);
            return;
        }
    }
    throw ConfigError("unknown scenario key '" + key + "'");
}

std::vector<std::string> scenario_keys() {
    std::vector<std::string> out;
    for (const Key& k : keys()) out.emplace_back(k.name);
    return out;
}

Scenario parse_scenario(const std::string& content, const std::filesystem::path& base_dir) {
    Scenario s;
    s.base_dir = base_dir;
    std::istringstream in(content);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = text::trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key(text::trim(body.substr(0, eq)));
        const std::string value(text::trim(body.substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing key");
        try {
            set_scenario_key(s, key, value);
        } catch (const Error& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    s.validate();
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open scenario '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str(), path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string format_scenario(const Scenario& s) {
    std::string out;
    for (const Key& k : keys()) {
        out += k.name;
        out += " = ";
        out += k.get(s);
        out += '\n';
    }
    return out;
}

} // namespace splatctl
