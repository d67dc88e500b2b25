#pragma once

// Parameter sweeps: run configuration, orchestration over a worker pool and
// CSV / JSON tables.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lzdiss/error.hpp"
#include "lzdiss/model.hpp"
#include "lzdiss/neqb.hpp"
#include "lzdiss/quapi.hpp"

namespace lzdiss::sweep {

enum class Engine { neqb, quapi, both };
enum class InitialSet { ground, excited, both };
enum class Format { csv, json };

inline constexpr const char* kCsvHeader = "v,T,theta,omega_c,gamma,s,engine,initial,probability,dt,k_max,t_max,status,wall_ms";

struct RunConfig {
    Engine engine = Engine::neqb;
    std::vector<double> v{1.0};
    std::vector<double> temperature{0.0};
    std::vector<double> theta{0.0};
    std::vector<double> omega_c{5.0};
    std::vector<double> gamma{5e-4};
    std::vector<double> s{3.0};
    InitialSet initial = InitialSet::ground;

    double tol = 0.02;  // QUAPI tol_p
    double neqb_tol = 1e-4;
    std::optional<double> dt;
    std::optional<int> k_max;
    std::optional<double> t_max;
    int k_max_cap = 10;
    int dt_halvings = 1;

    std::string out;  // empty: stdout
    Format format = Format::csv;
    unsigned workers = 0;  // 0: hardware concurrency
    bool timing = true;
};

struct Row {
    double v = 0.0;
    double temperature = 0.0;
    double theta = 0.0;
    double omega_c = 0.0;
    double gamma = 0.0;
    double s = 0.0;
    std::string engine;
    std::string initial;
    double probability = std::numeric_limits<double>::quiet_NaN();
    double dt = 0.0;
    int k_max = 0;
    double t_max = 0.0;
    std::string status;
    double wall_ms = 0.0;

    friend bool operator==(const Row& a, const Row& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.v == b.v && a.temperature == b.temperature && a.theta == b.theta && a.omega_c == b.omega_c &&
               a.gamma == b.gamma && a.s == b.s && a.engine == b.engine && a.initial == b.initial &&
               same(a.probability, b.probability) && a.dt == b.dt && a.k_max == b.k_max && a.t_max == b.t_max &&
               a.status == b.status && a.wall_ms == b.wall_ms;
    }
};

using Table = std::vector<Row>;

/// Rounds to 9 significant digits, the precision of emitted tables.
inline double quantize(double x) {
    if (!std::isfinite(x)) return x;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return std::strtod(buf, nullptr);
}

inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) parts.emplace_back();
    return parts;
}

/// Number with optional "pi" suffix, e.g. 0.022pi.
inline double parse_number(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    double scale = 1.0;
    if (t.size() >= 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
        scale = std::numbers::pi;
        t = trim(t.substr(0, t.size() - 2));
        if (t.empty() || t == "+") t = "1";
        if (t == "-") t = "-1";
    }
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse number '" + text + "'");
    }
    if (used != t.size()) throw ConfigError(key + ": cannot parse number '" + text + "'");
    if (!std::isfinite(x)) throw ConfigError(key + ": value must be finite");
    return x * scale;
}

inline int parse_int(const std::string& key, const std::string& text) {
    const double x = parse_number(key, text);
    if (x != std::floor(x) || std::abs(x) > 1e9) throw ConfigError(key + ": expected an integer, got '" + text + "'");
    return static_cast<int>(x);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
    if (t == "0" || t == "false" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

}  // namespace detail

/// Grid syntax: a single value, a comma list, or start:stop:count[:lin|log].
/// Values accept a "pi" suffix. Grids must be non-empty and strictly increasing.
inline std::vector<double> parse_grid(const std::string& key, const std::string& text, bool log_default) {
    const std::string t = detail::trim(text);
    if (t.empty()) throw ConfigError(key + ": empty grid");
    std::vector<double> g;
    if (t.find(':') != std::string::npos) {
        const auto parts = detail::split(t, ':');
        if (parts.size() < 3 || parts.size() > 4) {
            throw ConfigError(key + ": range must be start:stop:count[:lin|log]");
        }
        const double a = detail::parse_number(key, parts[0]);
        const double b = detail::parse_number(key, parts[1]);
        const int n = detail::parse_int(key, parts[2]);
        bool log_spacing = log_default;
        if (parts.size() == 4) {
            if (parts[3] == "log") {
                log_spacing = true;
            } else if (parts[3] == "lin") {
                log_spacing = false;
            } else {
                throw ConfigError(key + ": spacing must be 'lin' or 'log'");
            }
        }
        if (n < 1) throw ConfigError(key + ": count must be >= 1");
        if (n == 1) {
            if (a != b) throw ConfigError(key + ": count 1 needs start == stop");
            g.push_back(a);
        } else {
            if (log_spacing && !(a > 0.0 && b > 0.0)) throw ConfigError(key + ": log grid needs positive bounds");
            for (int i = 0; i < n; ++i) {
                const double f = static_cast<double>(i) / (n - 1);
                double x = log_spacing ? std::exp(std::log(a) + f * (std::log(b) - std::log(a))) : a + f * (b - a);
                if (i == 0) x = a;
                if (i == n - 1) x = b;
                g.push_back(x);
            }
        }
    } else {
        for (const auto& item : detail::split(t, ',')) g.push_back(detail::parse_number(key, item));
    }
    for (std::size_t i = 1; i < g.size(); ++i) {
        if (!(g[i] > g[i - 1])) throw ConfigError(key + ": grid must be strictly increasing");
    }
    return g;
}

using KeyValues = std::map<std::string, std::string>;

/// Flat "key = value" text; '#' starts a comment.
inline KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

inline KeyValues load_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

/// Builds and validates a RunConfig. Every diagnostic names its key.
inline RunConfig build_config(const KeyValues& kv) {
    RunConfig c;
    for (const auto& [raw_key, value] : kv) {
        std::string key = raw_key;
        std::replace(key.begin(), key.end(), '-', '_');
        if (key == "engine") {
            if (value == "neqb") {
                c.engine = Engine::neqb;
            } else if (value == "quapi") {
                c.engine = Engine::quapi;
            } else if (value == "both") {
                c.engine = Engine::both;
            } else {
                throw ConfigError("engine: expected neqb, quapi or both, got '" + value + "'");
            }
        } else if (key == "v" || key == "v_grid") {
            c.v = parse_grid("v", value, true);
        } else if (key == "temperature" || key == "t_grid") {
            c.temperature = parse_grid("temperature", value, false);
        } else if (key == "theta") {
            c.theta = parse_grid("theta", value, false);
        } else if (key == "omega_c") {
            c.omega_c = parse_grid("omega_c", value, false);
        } else if (key == "gamma") {
            c.gamma = parse_grid("gamma", value, false);
        } else if (key == "s") {
            c.s = parse_grid("s", value, false);
        } else if (key == "initial") {
            if (value == "ground") {
                c.initial = InitialSet::ground;
            } else if (value == "excited") {
                c.initial = InitialSet::excited;
            } else if (value == "both") {
                c.initial = InitialSet::both;
            } else {
                throw ConfigError("initial: expected ground, excited or both, got '" + value + "'");
            }
        } else if (key == "tol") {
            c.tol = detail::parse_number("tol", value);
        } else if (key == "neqb_tol") {
            c.neqb_tol = detail::parse_number("neqb_tol", value);
        } else if (key == "dt") {
            c.dt = detail::parse_number("dt", value);
        } else if (key == "k_max") {
            c.k_max = detail::parse_int("k_max", value);
        } else if (key == "t_max") {
            c.t_max = detail::parse_number("t_max", value);
        } else if (key == "k_max_cap") {
            c.k_max_cap = detail::parse_int("k_max_cap", value);
        } else if (key == "dt_halvings") {
            c.dt_halvings = detail::parse_int("dt_halvings", value);
        } else if (key == "out") {
            c.out = value;
        } else if (key == "format") {
            if (value == "csv") {
                c.format = Format::csv;
            } else if (value == "json") {
                c.format = Format::json;
            } else {
                throw ConfigError("format: expected csv or json, got '" + value + "'");
            }
        } else if (key == "workers") {
            const int w = detail::parse_int("workers", value);
            if (w < 0) throw ConfigError("workers: must be >= 0");
            c.workers = static_cast<unsigned>(w);
        } else if (key == "no_timing") {
            c.timing = !detail::parse_bool("no_timing", value);
        } else {
            throw ConfigError(raw_key + ": unknown key");
        }
    }

    // Range checks, before any computation.
    for (double x : c.v) {
        if (!(x > 0.0)) throw ConfigError("v: sweep speeds must be > 0");
    }
    for (double x : c.theta) {
        if (!(x > -std::numbers::pi / 2 && x <= std::numbers::pi / 2)) {
            throw ConfigError("theta: must lie in (-pi/2, pi/2]");
        }
    }
    for (double x : c.temperature) {
        if (!(x >= 0.0)) throw ConfigError("temperature: must be >= 0");
    }
    for (double x : c.omega_c) {
        if (!(x > 0.0)) throw ConfigError("omega_c: must be > 0");
    }
    for (double x : c.gamma) {
        if (!(x >= 0.0)) throw ConfigError("gamma: must be >= 0");
    }
    for (double x : c.s) {
        if (!(x >= 1.0)) throw ConfigError("s: must be >= 1");
    }
    if (!(c.tol >= 1e-3)) throw ConfigError("tol: must be >= 1e-3");
    if (!(c.neqb_tol > 0.0)) throw ConfigError("neqb_tol: must be > 0");
    if (c.k_max && (*c.k_max < 1 || *c.k_max > quapi::kMaxMemory)) {
        throw ConfigError("k_max: must lie in [1, " + std::to_string(quapi::kMaxMemory) + "]");
    }
    if (c.k_max_cap < 1 || c.k_max_cap > quapi::kMaxMemory) {
        throw ConfigError("k_max_cap: must lie in [1, " + std::to_string(quapi::kMaxMemory) + "]");
    }
    if (c.dt_halvings < 0) throw ConfigError("dt_halvings: must be >= 0");
    if (c.dt && !(*c.dt > 0.0)) throw ConfigError("dt: must be > 0");
    if (c.t_max && !(*c.t_max > 0.0)) throw ConfigError("t_max: must be > 0");
    if (c.engine != Engine::neqb) {
        if (c.dt.has_value() != c.k_max.has_value()) {
            throw ConfigError(std::string(c.dt ? "k_max" : "dt") + ": dt and k_max overrides must be given together");
        }
        if (c.dt && c.t_max) {
            try {
                quapi::ConvergenceParams{*c.dt, *c.k_max, *c.t_max, c.tol}.validate();
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("t_max: ") + e.what());
            }
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Orchestration

struct Task {
    double v, temperature, theta, omega_c, gamma, s;
    Engine engine;  // neqb or quapi
    Initial initial;
};

/// Tasks in lexicographic order over (v, T, theta, omega_c, gamma, s, engine, initial).
inline std::vector<Task> expand(const RunConfig& c) {
    std::vector<Engine> engines;
    if (c.engine != Engine::quapi) engines.push_back(Engine::neqb);
    if (c.engine != Engine::neqb) engines.push_back(Engine::quapi);
    std::vector<Initial> initials;
    if (c.initial != InitialSet::excited) initials.push_back(Initial::ground);
    if (c.initial != InitialSet::ground) initials.push_back(Initial::excited);
    std::vector<Task> tasks;
    for (double v : c.v)
        for (double temp : c.temperature)
            for (double th : c.theta)
                for (double wc : c.omega_c)
                    for (double g : c.gamma)
                        for (double s : c.s)
                            for (Engine e : engines)
                                for (Initial i : initials) tasks.push_back({v, temp, th, wc, g, s, e, i});
    return tasks;
}

namespace detail {

/// Smallest doubling of 50 that leaves < 1e-6 relaxation weight outside the
/// window and is an even multiple of dt.
inline double quapi_window(const ModelParams& p, const BathParams& b, double dt) {
    double t_max = 50.0;
    while (neqb::residual_relaxation(p, b, t_max) >= 1e-6 && t_max < 1e6) t_max *= 2.0;
    const double n = std::ceil(t_max / dt / 2.0) * 2.0;
    return n * dt;
}

inline Row run_task(const RunConfig& c, const Task& task) {
    Row row;
    row.v = task.v;
    row.temperature = task.temperature;
    row.theta = task.theta;
    row.omega_c = task.omega_c;
    row.gamma = task.gamma;
    row.s = task.s;
    row.engine = task.engine == Engine::neqb ? "neqb" : "quapi";
    row.initial = to_string(task.initial);
    const ModelParams p{1.0, task.v, task.theta};
    const BathParams b{task.s, task.gamma, task.omega_c, task.temperature};

    const auto start = std::chrono::steady_clock::now();
    try {
        if (task.engine == Engine::neqb) {
            if (c.t_max) {
                row.probability = neqb::run_protocol(p, b, task.initial, *c.t_max).probability;
                row.t_max = *c.t_max;
                row.status = "converged";
            } else {
                neqb::ControllerOptions opt;
                opt.prob_tol = c.neqb_tol;
                const auto r = neqb::run_converged(p, b, task.initial, opt);
                row.t_max = r.t_max;
                if (r.converged) {
                    row.probability = r.probability;
                    row.status = "converged";
                } else {
                    row.status = "budget-exceeded";
                }
            }
        } else if (c.dt) {
            const double t_max = c.t_max ? *c.t_max : quapi_window(p, b, *c.dt);
            const quapi::ConvergenceParams cp{*c.dt, *c.k_max, t_max, c.tol};
            row.probability = quapi::propagate(p, b, cp, task.initial).probability;
            row.dt = cp.dt;
            row.k_max = cp.k_max;
            row.t_max = cp.t_max;
            row.status = "converged";
        } else {
            quapi::ConvergeOptions opt;
            opt.k_max_cap = c.k_max_cap;
            opt.max_dt_halvings = c.dt_halvings;
            if (c.t_max) opt.t_max_fixed = *c.t_max;
            const auto r = quapi::converge(p, b, task.initial, c.tol, opt);
            row.dt = r.accepted.dt;
            row.k_max = r.accepted.k_max;
            row.t_max = r.accepted.t_max;
            if (r.converged) {
                row.probability = r.probability;
                row.status = "converged";
            } else {
                row.status = "budget-exceeded";
            }
        }
    } catch (const std::exception&) {
        // Integration or budget failure: flag the row, keep the sweep going.
        row.probability = std::numeric_limits<double>::quiet_NaN();
        row.status = "budget-exceeded";
    }
    const auto stop = std::chrono::steady_clock::now();
    if (c.timing) row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();

    for (double* x : {&row.v, &row.temperature, &row.theta, &row.omega_c, &row.gamma, &row.s, &row.probability,
                      &row.dt, &row.t_max, &row.wall_ms}) {
        *x = quantize(*x);
    }
    return row;
}

}  // namespace detail

inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates every grid point; rows come back in task order regardless of
/// the number of workers.
inline Table run_sweep(const RunConfig& c) {
    const std::vector<Task> tasks = expand(c);
    Table table(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) table[i] = detail::run_task(c, tasks[i]);
    };
    const unsigned n = std::min<unsigned>(resolve_workers(c.workers), static_cast<unsigned>(std::max<std::size_t>(tasks.size(), 1)));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    return table;
}

inline bool all_converged(const Table& t) {
    return std::all_of(t.begin(), t.end(), [](const Row& r) { return r.status == "converged"; });
}

// ---------------------------------------------------------------------------
// Emission and parsing

inline std::string to_csv(const Table& t) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const Row& r : t) {
        out += format_number(r.v) + "," + format_number(r.temperature) + "," + format_number(r.theta) + "," +
               format_number(r.omega_c) + "," + format_number(r.gamma) + "," + format_number(r.s) + "," + r.engine +
               "," + r.initial + "," + format_number(r.probability) + "," + format_number(r.dt) + "," +
               std::to_string(r.k_max) + "," + format_number(r.t_max) + "," + r.status + "," +
               format_number(r.wall_ms) + "\n";
    }
    return out;
}

inline std::string to_json(const Table& t) {
    using nlohmann::json;
    json arr = json::array();
    auto num = [](double x) -> json { return std::isnan(x) ? json(nullptr) : json(quantize(x)); };
    for (const Row& r : t) {
        arr.push_back(json{{"v", num(r.v)},
                           {"T", num(r.temperature)},
                           {"theta", num(r.theta)},
                           {"omega_c", num(r.omega_c)},
                           {"gamma", num(r.gamma)},
                           {"s", num(r.s)},
                           {"engine", r.engine},
                           {"initial", r.initial},
                           {"probability", num(r.probability)},
                           {"dt", num(r.dt)},
                           {"k_max", r.k_max},
                           {"t_max", num(r.t_max)},
                           {"status", r.status},
                           {"wall_ms", num(r.wall_ms)}});
    }
    return arr.dump(2) + "\n";
}

inline std::string emit(const Table& t, Format f) { return f == Format::csv ? to_csv(t) : to_json(t); }

inline void emit(const Table& t, Format f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("emit: cannot open '" + path + "' for writing");
    out << emit(t, f);
    out.flush();
    if (!out) throw Error("emit: write to '" + path + "' failed");
}

inline Table parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kCsvHeader) throw Error("parse_csv: unexpected header");
    auto num = [](const std::string& s) {
        return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::strtod(s.c_str(), nullptr);
    };
    Table t;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 14) throw Error("parse_csv: expected 14 fields");
        Row r;
        r.v = num(f[0]);
        r.temperature = num(f[1]);
        r.theta = num(f[2]);
        r.omega_c = num(f[3]);
        r.gamma = num(f[4]);
        r.s = num(f[5]);
        r.engine = f[6];
        r.initial = f[7];
        r.probability = num(f[8]);
        r.dt = num(f[9]);
        r.k_max = std::atoi(f[10].c_str());
        r.t_max = num(f[11]);
        r.status = f[12];
        r.wall_ms = num(f[13]);
        t.push_back(r);
    }
    return t;
}

inline Table parse_json(const std::string& text) {
    using nlohmann::json;
    const json arr = json::parse(text);
    auto num = [](const json& j) {
        return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
    };
    Table t;
    for (const json& o : arr) {
        Row r;
        r.v = num(o.at("v"));
        r.temperature = num(o.at("T"));
        r.theta = num(o.at("theta"));
        r.omega_c = num(o.at("omega_c"));
        r.gamma = num(o.at("gamma"));
        r.s = num(o.at("s"));
        r.engine = o.at("engine").get<std::string>();
        r.initial = o.at("initial").get<std::string>();
        r.probability = num(o.at("probability"));
        r.dt = num(o.at("dt"));
        r.k_max = o.at("k_max").get<int>();
        r.t_max = num(o.at("t_max"));
        r.status = o.at("status").get<std::string>();
        r.wall_ms = num(o.at("wall_ms"));
        t.push_back(r);
    }
    return t;
}

}  // namespace lzdiss::sweep
