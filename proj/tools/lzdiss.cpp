// lzdiss: command-line front end for sweeps, single trajectories, rate
// windows and QUAPI convergence scans.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lzdiss/lzdiss.hpp"

using namespace lzdiss;

namespace {

using KeyValues = sweep::KeyValues;

struct Flags {
    KeyValues kv;
    std::string config;
};

void add_key(CLI::App* app, Flags& f, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(flag, [&f, key](const std::string& v) { f.kv[key] = v; }, help);
}

void add_model_flags(CLI::App* app, Flags& f, bool grids) {
    app->add_option("--config", f.config, "key = value run configuration file");
    add_key(app, f, "--s", "s", "bath exponent (1 Ohmic, 3 super-Ohmic)");
    add_key(app, f, "--gamma", "gamma", "system-bath coupling");
    add_key(app, f, "--theta", "theta", "coupling angle, e.g. 0.022pi");
    add_key(app, f, "--omega-c", "omega_c", "bath cut-off");
    add_key(app, f, "--temperature", "temperature", "temperature");
    if (grids) {
        add_key(app, f, "--v-grid", "v", "sweep speeds: list or start:stop:count[:lin|log]");
        add_key(app, f, "--t-grid", "temperature", "temperature grid");
    } else {
        add_key(app, f, "--v", "v", "sweep speed");
    }
}

void add_run_flags(CLI::App* app, Flags& f) {
    add_key(app, f, "--engine", "engine", "neqb, quapi or both");
    add_key(app, f, "--initial", "initial", "ground, excited or both");
    add_key(app, f, "--tol", "tol", "QUAPI convergence tolerance on P");
    add_key(app, f, "--dt", "dt", "QUAPI time step override");
    add_key(app, f, "--k-max", "k_max", "QUAPI memory length override");
    add_key(app, f, "--t-max", "t_max", "protocol length override");
    add_key(app, f, "--k-max-cap", "k_max_cap", "largest k_max tried by the convergence scan");
    add_key(app, f, "--dt-halvings", "dt_halvings", "dt halvings allowed by the convergence scan");
}

void add_output_flags(CLI::App* app, Flags& f) {
    add_key(app, f, "--out", "out", "output file (default stdout)");
    add_key(app, f, "--format", "format", "csv or json");
}

KeyValues merged(const Flags& f) {
    KeyValues kv = f.config.empty() ? KeyValues{} : sweep::load_key_values(f.config);
    for (const auto& [k, v] : f.kv) kv[k] = v;
    return kv;
}

std::string take(KeyValues& kv, const std::string& key, const std::string& fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::string v = it->second;
    kv.erase(it);
    return v;
}

double single(const std::vector<double>& g, const std::string& key) {
    if (g.size() != 1) throw ConfigError(key + ": expected a single value, got a grid");
    return g.front();
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << text;
    if (!out.flush()) throw Error("write to '" + path + "' failed");
}

std::string num(double x) { return sweep::format_number(x); }

struct Point {
    ModelParams p;
    BathParams b;
    Initial initial;
};

Point single_point(const sweep::RunConfig& c) {
    if (c.initial == sweep::InitialSet::both) throw ConfigError("initial: expected ground or excited");
    const ModelParams p{1.0, single(c.v, "v"), single(c.theta, "theta")};
    const BathParams b{single(c.s, "s"), single(c.gamma, "gamma"), single(c.omega_c, "omega_c"),
                       single(c.temperature, "temperature")};
    return {p, b, c.initial == sweep::InitialSet::ground ? Initial::ground : Initial::excited};
}

int cmd_sweep(const Flags& f) {
    const sweep::RunConfig c = sweep::build_config(merged(f));
    const sweep::Table t = sweep::run_sweep(c);
    write_output(c.out, sweep::emit(t, c.format));
    if (!sweep::all_converged(t)) {
        std::cerr << "lzdiss: some grid points did not converge (status budget-exceeded)\n";
        return 2;
    }
    return 0;
}

int cmd_trace(const Flags& f) {
    KeyValues kv = merged(f);
    const double interval = sweep::detail::parse_number("interval", take(kv, "interval", "0.5"));
    if (!(interval > 0.0)) throw ConfigError("interval: must be > 0");
    const sweep::RunConfig c = sweep::build_config(kv);
    if (c.engine == sweep::Engine::both) throw ConfigError("engine: trace needs neqb or quapi");
    const Point pt = single_point(c);

    std::ostringstream out;
    if (c.engine == sweep::Engine::neqb) {
        double t_max = 0.0;
        if (c.t_max) {
            t_max = *c.t_max;
        } else {
            neqb::ControllerOptions opt;
            opt.prob_tol = c.neqb_tol;
            const auto r = neqb::run_converged(pt.p, pt.b, pt.initial, opt);
            if (!r.converged) throw IntegrationError("t_max did not converge; pass --t-max");
            t_max = r.t_max;
        }
        const auto r = neqb::run_protocol(pt.p, pt.b, pt.initial, t_max, {.record_interval = interval});
        out << "t,r_x,r_y,r_z,p_ground\n";
        for (const auto& s : r.trajectory) {
            out << num(s.t) << "," << num(s.r_x) << "," << num(s.r_y) << "," << num(s.r_z) << ","
                << num(0.5 * (1.0 + s.r_x)) << "\n";
        }
        out << "# probability=" << num(r.probability) << " t_max=" << num(t_max) << "\n";
    } else {
        quapi::ConvergenceParams cp;
        if (c.dt) {
            cp = {*c.dt, *c.k_max, c.t_max.value_or(0.0), c.tol};
            if (!c.t_max) cp.t_max = sweep::detail::quapi_window(pt.p, pt.b, *c.dt);
        } else {
            quapi::ConvergeOptions opt;
            opt.k_max_cap = c.k_max_cap;
            opt.max_dt_halvings = c.dt_halvings;
            if (c.t_max) opt.t_max_fixed = *c.t_max;
            cp = quapi::converge(pt.p, pt.b, pt.initial, c.tol, opt).accepted;
        }
        const int every = std::max(1, static_cast<int>(std::lround(interval / cp.dt)));
        const auto r = quapi::propagate(pt.p, pt.b, cp, pt.initial, {.record_every = every});
        out << "t,p_ground,p_excited,trace\n";
        for (const auto& s : r.trajectory) {
            out << num(s.t) << "," << num(s.p_ground) << "," << num(s.p_excited) << "," << num(s.trace) << "\n";
        }
        out << "# probability=" << num(r.probability) << " dt=" << num(cp.dt) << " k_max=" << cp.k_max
            << " t_max=" << num(cp.t_max) << "\n";
    }
    write_output(c.out, out.str());
    return 0;
}

int cmd_window(const Flags& f) {
    KeyValues kv = merged(f);
    const std::vector<double> grid =
        sweep::parse_grid("time_grid", take(kv, "time_grid", "-60:60:1201:lin"), false);
    if (!kv.count("gamma")) kv["gamma"] = "1";
    const sweep::RunConfig c = sweep::build_config(kv);
    const Point pt = single_point(c);
    const auto w = analysis::window_profile(pt.p, pt.b, grid);
    std::optional<double> xi;
    if (pt.b.temperature == 0.0) xi = analysis::xi_weight(pt.p, pt.b);

    std::ostringstream out;
    if (c.format == sweep::Format::json) {
        nlohmann::json j;
        j["t"] = w.t;
        j["gamma1"] = w.gamma1;
        j["peak_times"] = w.peak_times;
        j["peak_gaps"] = w.peak_gaps;
        j["half_width"] = w.half_width;
        j["xi"] = xi ? nlohmann::json(*xi) : nlohmann::json(nullptr);
        out << j.dump(2) << "\n";
    } else {
        out << "t,gamma1\n";
        for (std::size_t i = 0; i < w.t.size(); ++i) out << num(w.t[i]) << "," << num(w.gamma1[i]) << "\n";
        for (std::size_t i = 0; i < w.peak_times.size(); ++i) {
            out << "# peak t=" << num(w.peak_times[i]) << " gap=" << num(w.peak_gaps[i])
                << " gap/omega_c=" << num(w.peak_gaps[i] / pt.b.omega_c) << "\n";
        }
        out << "# half_width=" << num(w.half_width) << "\n";
        if (xi) out << "# xi=" << num(*xi) << "\n";
    }
    write_output(c.out, out.str());
    return 0;
}

int cmd_converge(const Flags& f) {
    KeyValues kv = merged(f);
    if (!kv.count("engine")) kv["engine"] = "quapi";
    const sweep::RunConfig c = sweep::build_config(kv);
    if (c.engine != sweep::Engine::quapi) throw ConfigError("engine: converge runs the quapi engine only");
    const Point pt = single_point(c);
    quapi::ConvergeOptions opt;
    opt.k_max_cap = c.k_max_cap;
    opt.max_dt_halvings = c.dt_halvings;
    if (c.t_max) opt.t_max_fixed = *c.t_max;
    const auto r = quapi::converge(pt.p, pt.b, pt.initial, c.tol, opt);

    std::ostringstream out;
    out << "stage,t_max,dt,k_max,probability,change\n";
    for (const auto& row : r.report) {
        out << row.stage << "," << num(row.t_max) << "," << num(row.dt) << "," << row.k_max << ","
            << num(row.probability) << "," << num(row.change) << "\n";
    }
    out << "# status=" << (r.converged ? "converged" : "budget-exceeded");
    if (!r.failure.empty()) out << " reason=\"" << r.failure << "\"";
    out << " probability=" << num(r.probability) << " dt=" << num(r.accepted.dt) << " k_max=" << r.accepted.k_max
        << " t_max=" << num(r.accepted.t_max) << "\n";
    write_output(c.out, out.str());
    return r.converged ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Landau-Zener transitions of a driven two-level system in a bosonic bath"};
    app.require_subcommand(1);

    Flags sweep_flags, trace_flags, window_flags, converge_flags;

    auto* sweep_cmd = app.add_subcommand("sweep", "probability table over parameter grids");
    add_model_flags(sweep_cmd, sweep_flags, true);
    add_run_flags(sweep_cmd, sweep_flags);
    add_output_flags(sweep_cmd, sweep_flags);
    add_key(sweep_cmd, sweep_flags, "--workers", "workers", "worker threads (0: all cores)");
    sweep_cmd->add_flag_callback("--no-timing", [&] { sweep_flags.kv["no_timing"] = "1"; },
                                 "write wall_ms = 0 for byte-stable output");

    auto* trace_cmd = app.add_subcommand("trace", "time series of a single protocol run");
    add_model_flags(trace_cmd, trace_flags, false);
    add_run_flags(trace_cmd, trace_flags);
    add_output_flags(trace_cmd, trace_flags);
    add_key(trace_cmd, trace_flags, "--interval", "interval", "sampling interval in time");

    auto* window_cmd = app.add_subcommand("window", "relaxation-rate profile and integrated weight");
    add_model_flags(window_cmd, window_flags, false);
    add_output_flags(window_cmd, window_flags);
    add_key(window_cmd, window_flags, "--time-grid", "time_grid", "time grid start:stop:count[:lin|log]");

    auto* converge_cmd = app.add_subcommand("converge", "QUAPI convergence scan table");
    add_model_flags(converge_cmd, converge_flags, false);
    add_run_flags(converge_cmd, converge_flags);
    add_output_flags(converge_cmd, converge_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags);
        if (trace_cmd->parsed()) return cmd_trace(trace_flags);
        if (window_cmd->parsed()) return cmd_window(window_flags);
        if (converge_cmd->parsed()) return cmd_converge(converge_flags);
    } catch (const ConfigError& e) {
        std::cerr << "lzdiss: config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "lzdiss: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
