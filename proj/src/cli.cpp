#include "ehstack/cli.hpp"

#include "ehstack/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

namespace ehstack::cli {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

Inputs load_inputs(const HarnessConfig& cfg) {
    Inputs in;
    if (cfg.trace.synthetic) {
        in.trace = synthesize_irradiance(*cfg.trace.synthetic);
    } else {
        TraceFormat fmt;
        fmt.minute_indexed = cfg.trace.minute_indexed;
        in.trace = load_irradiance(cfg.trace.path, fmt);
    }
    if (!cfg.events.path.empty()) {
        in.events = load_events(cfg.events.path);
    } else if (cfg.events.parking) {
        in.events = generate_parking_events(*cfg.events.parking);
    }
    if (in.events) in.events->hold_s = cfg.events.hold_s;
    return in;
}

PowerProfile profile_for(const HarnessConfig& cfg) {
    if (!cfg.plan.profile_path.empty()) return parse_profile_json(read_file(cfg.plan.profile_path));
    return profile_application(cfg.app, cfg.plan.profile_duration, cfg.sim);
}

ScalingPlan plan_for(const HarnessConfig& cfg, const PowerProfile& profile, const IrradianceTrace& trace) {
    std::optional<EnvCap> cap;
    if (cfg.plan.env_cap) {
        double peak = 0.0;
        for (const auto& s : trace.samples()) peak = std::max(peak, s.g);
        cap = EnvCap{peak * cfg.plan.s_i, *cfg.plan.env_cap};
    }
    if (cfg.plan.s_tp) return make_plan(profile, cfg.app, cfg.plan.mode, *cfg.plan.s_tp, cfg.plan.s_i, cap);
    return make_max_plan(profile, cfg.app, cfg.plan.mode, cfg.plan.s_i, cap);
}

RunOutput execute(const HarnessConfig& cfg, const std::optional<ScalingPlan>& stored_plan,
                  const std::optional<PowerProfile>& stored_profile) {
    const Inputs in = load_inputs(cfg);
    RunOutput out;
    out.meta.config_hash = config_hash(cfg);

    ScalingPlan plan;
    plan.s_i = cfg.plan.s_i;
    std::optional<PowerProfile> profile = stored_profile;
    if (stored_plan) {
        plan = *stored_plan;
    } else if (cfg.plan.mode != PlanMode::realtime) {
        if (!profile) profile = profile_for(cfg);
        plan = plan_for(cfg, *profile, in.trace);
    }
    if ((plan.mode == PlanMode::st_sp || plan.mode == PlanMode::st_sp_sn) && !profile) profile = profile_for(cfg);

    const Experiment ex = build_experiment(plan, in.trace, in.events ? &*in.events : nullptr, cfg.app);
    SimConfig sim = cfg.sim;
    sim.skip_nights = sim.skip_nights || ex.skip_nights;
    out.result = simulate(ex.trace, ex.has_events ? &ex.events : nullptr, cfg.ess, ex.app, sim);

    out.meta.plan = plan;
    out.meta.profile = profile;
    out.meta.run_id = out.meta.config_hash.substr(0, 12) + "-" + to_string(plan.mode);
    out.meta.predicted_throughput = profile ? predict_throughput(plan, out.result, *profile)
                                            : predict_throughput(plan, out.result, PowerProfile{});
    out.result.stack.config_hash = out.meta.config_hash;
    out.result.stack.run_id = out.meta.run_id;
    return out;
}

CompareReport compare_runs(const StoredRun& baseline, const StoredRun& scaled, double window) {
    CompareReport r;
    r.s_tp = scaled.meta.plan.s_tp;
    r.baseline_throughput = static_cast<double>(baseline.throughput_bytes);
    r.predicted_throughput = scaled.meta.predicted_throughput;
    if (r.baseline_throughput > 0.0) r.throughput_error = throughput_error(r.predicted_throughput, r.baseline_throughput);

    SimResult tmp;
    tmp.activity = scaled.activity;
    tmp.profile = scaled.profile;
    const SimResult real = rescale_timeline(tmp, r.s_tp);
    r.raw = compute_ape(baseline.activity, real.activity, 0.0);
    r.dtw = compute_ape(baseline.activity, real.activity, window);
    return r;
}

std::string compare_json(const CompareReport& r) {
    const auto ape = [](const ApeReport& a) {
        return ordered_json{{"epsilon", a.epsilon},       {"n_diff", a.n_diff},
                            {"n_total", a.n_total},       {"n_grid", a.n_grid},
                            {"epsilon_grid", a.epsilon_grid}, {"window_s", a.dtw_window},
                            {"band_steps", a.band == kUnbounded ? -1 : static_cast<long long>(a.band)},
                            {"mismatch_spans", a.spans.size()}};
    };
    ordered_json j;
    j["s_tp"] = r.s_tp;
    j["baseline_throughput_bytes"] = r.baseline_throughput;
    j["predicted_throughput_bytes"] = r.predicted_throughput;
    j["throughput_error"] = r.throughput_error ? ordered_json(*r.throughput_error) : ordered_json(nullptr);
    j["ape_raw"] = ape(r.raw);
    j["ape_dtw"] = ape(r.dtw);
    return j.dump(2) + "\n";
}

double SweepCell::detection_fraction() const noexcept {
    return events_offered > 0 ? static_cast<double>(detected_at_next_sample) / static_cast<double>(events_offered)
                              : 0.0;
}

HarnessConfig sweep_cell_config(const HarnessConfig& cfg, double capacitance, double s_i) {
    HarnessConfig c = cfg;
    c.ess.storage.capacitance = capacitance;
    c.plan.s_i = s_i;
    c.sweep = SweepBlock{};
    return c;
}

std::vector<SweepCell> run_sweep(const HarnessConfig& cfg, int workers, const std::string& out_dir) {
    const std::vector<double> caps =
        cfg.sweep.capacitance.empty() ? std::vector<double>{cfg.ess.storage.capacitance} : cfg.sweep.capacitance;
    const std::vector<double> sis = cfg.sweep.s_i.empty() ? std::vector<double>{cfg.plan.s_i} : cfg.sweep.s_i;
    std::vector<SweepCell> cells;
    std::vector<HarnessConfig> jobs;
    for (double c : caps) {
        for (double s : sis) {
            SweepCell cell;
            cell.capacitance = c;
            cell.s_i = s;
            cells.push_back(cell);
            jobs.push_back(sweep_cell_config(cfg, c, s));
        }
    }

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            SweepCell& cell = cells[k];
            try {
                jobs[k].ess.validate();
                RunOutput run = execute(jobs[k]);
                cell.config_hash = run.meta.config_hash;
                cell.events_offered = run.result.events_offered;
                cell.detected_at_event = run.result.detected_at_event;
                cell.detected_at_next_sample = run.result.detected_at_next_sample;
                cell.throughput_bytes = run.result.throughput_bytes;
                cell.result_json = result_json(run.result, run.meta);
                if (!out_dir.empty()) {
                    const fs::path dir = fs::path(out_dir) / ("cell_" + std::to_string(k / sis.size()) + "_" +
                                                              std::to_string(k % sis.size()));
                    write_run(dir.string(), run.result, run.meta);
                    write_file((dir / "config.json").string(), dump_config(jobs[k]));
                }
            } catch (const std::exception& e) {
                cell.status = std::string("error: ") + e.what();
            }
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < n; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return cells;
}

std::string heatmap_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out << "capacitance,s_i,status,events_offered,detected_at_event,detected_at_next_sample,detection_fraction,"
           "throughput_bytes,config_hash\n";
    for (const auto& c : cells) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", c.detection_fraction());
        std::string status = c.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        out << c.capacitance << ',' << c.s_i << ',' << status << ',' << c.events_offered << ','
            << c.detected_at_event << ',' << c.detected_at_next_sample << ',' << buf << ',' << c.throughput_bytes
            << ',' << c.config_hash << '\n';
    }
    return out.str();
}

namespace {

struct Common {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string mode;
};

HarnessConfig configured(const Common& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    HarnessConfig cfg = load_config(o.config);
    if (o.seed) reseed(cfg, *o.seed);
    if (!o.mode.empty()) cfg.plan.mode = parse_plan_mode(o.mode);
    if (o.workers) cfg.sweep.workers = *o.workers;
    return cfg;
}

void summary_line(const SimResult& r, const RunMeta& m) {
    const EnergyLedger& l = r.stack.ledger;
    const double in = l.inputs() > 0.0 ? l.inputs() : 1.0;
    std::printf("%s throughput=%llu B predicted=%.1f B", m.run_id.c_str(),
                static_cast<unsigned long long>(r.throughput_bytes), m.predicted_throughput);
    for (std::size_t k = 0; k < kActivityCount; ++k) {
        const auto a = static_cast<Activity>(k);
        std::printf(" %s=%.1f%%", to_string(a), 100.0 * l.activity(a) / in);
    }
    std::printf(" residual=%.4g J closure=%.2g\n", l.storage_residual, l.closure_error());
}

int cmd_simulate(const Common& o, const std::string& plan_path) {
    HarnessConfig cfg = configured(o);
    std::optional<ScalingPlan> plan;
    std::optional<PowerProfile> profile;
    if (!plan_path.empty()) {
        auto [p, prof] = parse_plan_json(read_file(plan_path));
        plan = p;
        profile = prof;
        cfg.plan.mode = p.mode;
    }
    const RunOutput run = execute(cfg, plan, profile);
    write_run(o.out, run.result, run.meta);
    write_file((fs::path(o.out) / "config.json").string(), dump_config(cfg));
    summary_line(run.result, run.meta);
    return 0;
}

int cmd_profile(const Common& o) {
    const HarnessConfig cfg = configured(o);
    const PowerProfile p = profile_application(cfg.app, cfg.plan.profile_duration, cfg.sim);
    fs::create_directories(o.out);
    write_file((fs::path(o.out) / "profile.json").string(), profile_json(p));
    std::printf("%s P_A=%.6g W P_I=%.6g W t_A=%g s T_App=%g s theta=%g B\n", p.app_name.c_str(), p.p_active_avg,
                p.p_idle_avg, p.t_active, p.t_app_period, p.theta_profiling);
    return 0;
}

int cmd_plan(const Common& o, const std::string& profile_path, const std::string& s_tp) {
    HarnessConfig cfg = configured(o);
    if (!profile_path.empty()) cfg.plan.profile_path = fs::absolute(profile_path).string();
    if (!s_tp.empty()) {
        if (s_tp == "max") cfg.plan.s_tp.reset();
        else cfg.plan.s_tp = std::stod(s_tp);
    }
    if (cfg.plan.mode == PlanMode::realtime) cfg.plan.mode = PlanMode::st_sp;
    const PowerProfile profile = profile_for(cfg);
    const Inputs in = load_inputs(cfg);
    const ScalingPlan plan = plan_for(cfg, profile, in.trace);
    fs::create_directories(o.out);
    write_file((fs::path(o.out) / "plan.json").string(), plan_json(plan, profile));
    std::printf("%s S_TP=%g S_f=%.6g S_I=%g binding=%s\n", to_string(plan.mode), plan.s_tp, plan.s_f, plan.s_i,
                plan.binding.empty() ? "-" : plan.binding.c_str());
    return 0;
}

int cmd_compare(const std::string& baseline, const std::string& scaled, double window, const std::string& out) {
    const StoredRun a = read_run(baseline);
    const StoredRun b = read_run(scaled);
    const CompareReport r = compare_runs(a, b, window);
    fs::create_directories(out);
    write_file((fs::path(out) / "compare.json").string(), compare_json(r));
    std::ostringstream spans;
    const double L = a.activity.step_len;
    spans << "path_begin,path_end,baseline_t_begin,baseline_t_end,scaled_t_begin,scaled_t_end\n";
    for (const auto& s : r.dtw.spans) {
        spans << s.path_begin << ',' << s.path_end << ',' << L * static_cast<double>(s.a_begin) << ','
              << L * static_cast<double>(s.a_end + 1) << ',' << L * static_cast<double>(s.b_begin) << ','
              << L * static_cast<double>(s.b_end + 1) << '\n';
    }
    write_file((fs::path(out) / "diff_spans.csv").string(), spans.str());
    std::printf("throughput_error=%s ape_raw=%.4f ape_dtw=%.4f\n",
                r.throughput_error ? std::to_string(*r.throughput_error).c_str() : "n/a", r.raw.epsilon,
                r.dtw.epsilon);
    return 0;
}

int cmd_sweep(const Common& o) {
    const HarnessConfig cfg = configured(o);
    fs::create_directories(o.out);
    const auto t0 = std::chrono::steady_clock::now();
    const auto cells = run_sweep(cfg, cfg.sweep.workers, o.out);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file((fs::path(o.out) / "heatmap.csv").string(), heatmap_csv(cells));
    write_file((fs::path(o.out) / "config.json").string(), dump_config(cfg));
    write_file((fs::path(o.out) / "timing.json").string(),
               ordered_json{{"wall_time_s", wall}, {"workers", cfg.sweep.workers}}.dump(2) + "\n");
    int failed = 0;
    for (const auto& c : cells) {
        if (c.status != "ok") {
            ++failed;
            std::fprintf(stderr, "cell C=%g S_I=%g: %s\n", c.capacitance, c.s_i, c.status.c_str());
        }
    }
    std::printf("%zu cells, %d failed, %.1f s\n", cells.size(), failed, wall);
    return failed > 0 ? 3 : 0;
}

int cmd_stacks(const std::string& result_dir, double bin, const std::string& out) {
    const StoredRun r = read_run(result_dir);
    const std::string dir = out.empty() ? result_dir : out;
    fs::create_directories(dir);
    std::ostringstream s;
    write_stack_csv(s, r.ledger);
    write_file((fs::path(dir) / "stack.csv").string(), s.str());
    std::cout << s.str();
    if (bin > 0.0 && !r.profile.bins.empty()) {
        const auto per = std::max<std::size_t>(1, static_cast<std::size_t>(bin / r.profile.step_len + 0.5));
        EnergyStackProfile coarse;
        coarse.step_len = r.profile.step_len * static_cast<double>(per);
        for (std::size_t k = 0; k < r.profile.bins.size(); k += per) {
            StackBin acc;
            for (std::size_t m = k; m < std::min(k + per, r.profile.bins.size()); ++m) {
                const auto& b = r.profile.bins[m];
                acc.harvested += b.harvested;
                acc.external += b.external;
                acc.mppt_loss += b.mppt_loss;
                acc.storage_loss += b.storage_loss;
                acc.converter_loss += b.converter_loss;
                acc.soc += b.soc;
                acc.sensor += b.sensor;
                acc.storage_delta += b.storage_delta;
            }
            coarse.bins.push_back(acc);
        }
        std::ostringstream p;
        write_profile_csv(p, coarse);
        write_file((fs::path(dir) / "profile_binned.csv").string(), p.str());
    }
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"ehstack: energy-harvesting IoT simulator and evaluation harness"};
    app.require_subcommand(1);

    Common common;
    const auto add_common = [&](CLI::App* sub, bool with_workers) {
        sub->add_option("--config", common.config, "harness config (JSON)")->required();
        sub->add_option("--out", common.out, "output directory");
        sub->add_option("--seed", common.seed, "override every generator seed");
        sub->add_option("--mode", common.mode, "realtime | st-sp | st-sp-sn | st-up");
        if (with_workers) sub->add_option("--workers", common.workers, "parallel simulations");
    };

    std::string plan_path;
    auto* sim = app.add_subcommand("simulate", "run one experiment");
    add_common(sim, false);
    sim->add_option("--plan", plan_path, "use a stored plan.json");

    auto* prof = app.add_subcommand("profile", "profile the application from a constant supply");
    add_common(prof, false);

    std::string profile_path;
    std::string s_tp;
    auto* plan = app.add_subcommand("plan", "solve S_f for a target S_TP (or the largest admissible)");
    add_common(plan, false);
    plan->add_option("--profile", profile_path, "stored profile.json");
    plan->add_option("--s-tp", s_tp, "target S_TP or 'max'");

    std::string baseline;
    std::string scaled;
    double window = 3600.0;
    std::string cmp_out = "out";
    auto* cmp = app.add_subcommand("compare", "compare a scaled run against a real-time baseline");
    cmp->add_option("--baseline", baseline, "baseline run directory")->required();
    cmp->add_option("--scaled", scaled, "scaled run directory")->required();
    cmp->add_option("--window", window, "DTW window in seconds (0 disables warping)");
    cmp->add_option("--out", cmp_out, "output directory");

    auto* sweep = app.add_subcommand("sweep", "capacitance x S_I grid");
    add_common(sweep, true);

    std::string result_dir;
    double bin = 0.0;
    std::string stacks_out;
    auto* stacks = app.add_subcommand("stacks", "re-render the energy stack of a stored run");
    stacks->add_option("--result", result_dir, "run directory")->required();
    stacks->add_option("--bin", bin, "re-bin the stack profile to this many seconds");
    stacks->add_option("--out", stacks_out, "output directory (default: the run directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sim) return cmd_simulate(common, plan_path);
        if (*prof) return cmd_profile(common);
        if (*plan) return cmd_plan(common, profile_path, s_tp);
        if (*cmp) return cmd_compare(baseline, scaled, window, cmp_out);
        if (*sweep) return cmd_sweep(common);
        if (*stacks) return cmd_stacks(result_dir, bin, stacks_out);
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        // ConfigError, ValidationError, ScheduleError
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 2;
}

}  // namespace ehstack::cli
