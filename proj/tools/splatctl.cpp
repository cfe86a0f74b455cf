// splatctl: run densification experiments on the toy splatting simulator.

#include "splatctl/error.hpp"
#include "splatctl/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace splatctl;

struct Common {
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> steps;
    std::string grid;
    std::string out_dir = "out";
    bool deterministic = false;
    int jobs = 1;
    std::vector<std::string> overrides;
    bool progress = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Override the scenario seed");
    app->add_option("--steps", c.steps, "Override total_steps");
    app->add_option("--grid", c.grid, "Override the grid, e.g. 64x64");
    app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
    app->add_flag("--deterministic", c.deterministic, "Single-threaded, bit-stable execution");
    app->add_option("--jobs,-j", c.jobs, "Parallel member runs for compare/sweep/ablate")->capture_default_str();
    app->add_option("--set", c.overrides, "Scenario override key=value (repeatable)");
    app->add_flag("--progress", c.progress, "Print a line per logged step to stderr");
}

Scenario load(const std::string& path, const Common& c) {
    Scenario s = load_scenario(path);
    for (const std::string& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_scenario_key(s, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) s.seed = *c.seed;
    if (c.steps) s.schedule.total_steps = *c.steps;
    if (!c.grid.empty()) s.grid = parse_grid(c.grid);
    s.validate();
    return s;
}

/// Labels such as "cadam/no_reset" become one directory name.
std::string dir_name(std::string label) {
    std::replace(label.begin(), label.end(), '/', '_');
    return label;
}

int jobs_of(const Common& c) {
    return c.deterministic ? 1 : std::max(1, c.jobs);
}

StepObserver progress_observer(const Common& c) {
    if (!c.progress) return {};
    return [](const MetricsRecord& r) {
        std::fprintf(stderr, "step %lld n=%zu loss=%.6g selected=%zu\n", static_cast<long long>(r.step),
                     r.n_primitives, r.loss_vs_reference, r.n_selected);
    };
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Densification controller experiments on a toy 2D splatting simulator"};
    app.require_subcommand(1);

    Common common;

    std::string scenario_path;
    auto* run_cmd = app.add_subcommand("run", "Run one scenario");
    run_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
    add_common(run_cmd, common);

    std::string controllers = "baseline,cadam";
    auto* cmp_cmd = app.add_subcommand("compare", "Run the scenario under two controllers");
    cmp_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
    cmp_cmd->add_option("--controllers", controllers, "Two controllers, comma separated")->capture_default_str();
    std::vector<std::string> overrides_a, overrides_b;
    cmp_cmd->add_option("--set-a", overrides_a, "Override applied to the first run only");
    cmp_cmd->add_option("--set-b", overrides_b, "Override applied to the second run only");
    add_common(cmp_cmd, common);

    std::string axis;
    std::vector<std::string> values;
    auto* sweep_cmd = app.add_subcommand("sweep", "One run per value of a threshold");
    sweep_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
    sweep_cmd->add_option("--axis", axis, "tau_Q, tau_SNR, sigma_ln, tau_pos or any scenario key")->required();
    sweep_cmd->add_option("--values", values, "Values to sweep")->required()->delimiter(',');
    add_common(sweep_cmd, common);

    std::vector<std::string> variants = {"full", "momentum_only", "no_reset"};
    auto* ablate_cmd = app.add_subcommand("ablate", "CAdam ablation variants");
    ablate_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
    ablate_cmd->add_option("--variants", variants, "full, momentum_only, no_reset")->delimiter(',');
    add_common(ablate_cmd, common);

    std::string trace_path;
    std::string replay_policy = "cadam";
    std::string replay_scenario;
    auto* replay_cmd = app.add_subcommand("replay", "Run controller statistics over a recorded gradient trace");
    replay_cmd->add_option("trace", trace_path, "Trace file (JSON lines)")->required();
    replay_cmd->add_option("--controller", replay_policy, "baseline or cadam")->capture_default_str();
    replay_cmd->add_option("--scenario", replay_scenario, "Take controller and moment settings from a scenario");
    add_common(replay_cmd, common);

    bool want_masks = false, want_ply = false, want_render = false;
    std::string run_dir;
    auto* export_cmd = app.add_subcommand("export", "Regenerate artifacts from a finished run directory");
    export_cmd->add_option("run_dir", run_dir, "Directory written by `run`")->required();
    export_cmd->add_flag("--masks", want_masks, "Write masks/round_%04d.pgm from selections.jsonl");
    export_cmd->add_flag("--ply", want_ply, "Write final.ply from final.snap");
    export_cmd->add_flag("--render", want_render, "Write render_final.pgm from final.snap");
    add_common(export_cmd, common);

    CLI11_PARSE(app, argc, argv);

    try {
        const std::filesystem::path out(common.out_dir);
        if (run_cmd->parsed()) {
            const Scenario s = load(scenario_path, common);
            const RunResult r = run(s, progress_observer(common));
            write_run_outputs(r, out);
            std::cout << run_report(r);
        } else if (cmp_cmd->parsed()) {
            const auto comma = controllers.find(',');
            if (comma == std::string::npos) throw ConfigError("--controllers expects two names, e.g. baseline,cadam");
            Scenario a = load(scenario_path, common);
            Scenario b = a;
            a.controller = parse_policy(controllers.substr(0, comma));
            b.controller = parse_policy(controllers.substr(comma + 1));
            auto apply = [](Scenario& s, const std::vector<std::string>& kvs) {
                for (const std::string& kv : kvs) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
                    set_scenario_key(s, kv.substr(0, eq), kv.substr(eq + 1));
                }
                s.validate();
            };
            apply(a, overrides_a);
            apply(b, overrides_b);
            const ComparisonReport rep = compare(a, b, jobs_of(common));
            write_run_outputs(rep.a, out / ("a_" + dir_name(rep.label_a)));
            write_run_outputs(rep.b, out / ("b_" + dir_name(rep.label_b)));
            write_file(out / "comparison.csv", rep.joined_csv());
            write_file(out / "report.txt", rep.text());
            std::cout << rep.text();
        } else if (sweep_cmd->parsed()) {
            const Scenario s = load(scenario_path, common);
            const SweepReport rep = sweep(s, axis, values, jobs_of(common));
            for (const SweepRow& row : rep.rows) write_run_outputs(row.result, out / (axis + "_" + row.value));
            write_file(out / "sweep.csv", rep.table());
            std::cout << rep.table();
        } else if (ablate_cmd->parsed()) {
            const Scenario s = load(scenario_path, common);
            std::vector<AblationVariant> vs;
            for (const std::string& v : variants) vs.push_back(parse_ablation_variant(v));
            const AblationReport rep = ablate(s, vs, jobs_of(common));
            for (const auto& [v, r] : rep.runs) write_run_outputs(r, out / to_string(v));
            write_file(out / "growth.csv", rep.growth_csv());
            write_file(out / "ablation.csv", rep.table());
            std::cout << rep.table();
        } else if (replay_cmd->parsed()) {
            Scenario s;
            if (!replay_scenario.empty()) s = load(replay_scenario, common);
            const GradientTrace trace = load_trace(trace_path);
            const std::vector<ReplayRecord> recs =
                replay_trace(trace, parse_policy(replay_policy), s.control, s.moments);
            const std::string csv = replay_csv(recs);
            std::filesystem::create_directories(out);
            write_file(out / "replay.csv", csv);
            std::size_t selected = 0;
            for (const ReplayRecord& r : recs) selected += r.n_selected;
            std::cout << "records " << recs.size() << ", primitives " << trace.ids.size() << ", selected "
                      << selected << '\n';
        } else if (export_cmd->parsed()) {
            if (!want_masks && !want_ply && !want_render) {
                throw ConfigError("export needs at least one of --masks, --ply, --render");
            }
            const std::filesystem::path dir(run_dir);
            const Scenario s = load((dir / "scenario.scn").string(), common);
            if (want_masks) {
                const std::vector<std::uint8_t> bytes = read_file(dir / "selections.jsonl");
                const auto sel = parse_selections_jsonl(std::string(bytes.begin(), bytes.end()));
                const auto paths = export_masks(sel, s.grid, out / "masks");
                std::cout << "wrote " << paths.size() << " masks\n";
            }
            if (want_ply || want_render) {
                const Snapshot snap = from_snapshot(read_file(dir / "final.snap"));
                std::filesystem::create_directories(out);
                if (want_ply) write_file(out / "final.ply", to_ply_ascii(snap.population));
                if (want_render) {
                    RenderOptions opts;
                    opts.cutoff_sigmas = s.cutoff_sigmas;
                    write_pgm(out / "render_final.pgm", render(snap.population, s.grid, opts));
                }
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
