#pragma once

// Run configuration: a single JSON document.
//
//   {
//     "model": "sl" | "fhn",                       required
//     "M": int >= 1, "N": int >= 1,                required
//     "params": {"alpha", "beta"}                  sl (both required)
//             | {"I", "a", "b", "eps", "v_r"}      fhn (I required, rest default)
//     "C": number >= 0,                            required
//     "delay": {"homogeneous": tau}
//            | {"files": {"down": path, "right": path}},
//     "sim": {"t_end", "dt", "record_every", "t_discard", "threads"},
//     "history": {"kind": "constant"|"random"|"kick"|"planewave"|"encoded", ...},
//     "seed": int
//   }
//
// Shorthands accepted at top level: "alpha", "beta", "I" (merged into params)
// and "tau" (same as delay.homogeneous).

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dlattice/core.hpp"
#include "dlattice/error.hpp"

namespace dlattice {

enum class HistoryKind { Constant, Random, Kick, PlaneWave, Encoded };

struct HistorySettings {
    HistoryKind kind = HistoryKind::Constant;
    double amplitude = 0.1;  // random: per-component uniform half-width; kick: gate value
    double width = 3.0;      // kick: duration of the gate pulse at the end of the history window
    double noise = 0.0;      // planewave / encoded: additive per-node noise amplitude
    int mode_l = 0;          // planewave: mode indices and Kepler-root index within the mode
    int mode_j = 0;
    int root_index = -1;     // -1 selects the largest-amplitude wave of the mode
    std::string eta_file;    // encoded: shift field CSV
    double settle = 0.0;     // encoded: transient of the reference orbit (0 -> 10 * tau)
};

struct SimSettings {
    double t_end = 100.0;
    std::optional<double> dt;         // default min(0.01, min_delay / 8)
    int record_every = 10;
    std::optional<double> t_discard;  // default 10 * max_delay
    int threads = 0;                  // 0 -> DLATTICE_THREADS or 1
};

struct RunConfig {
    LatticeSpec lattice;
    std::optional<double> tau;  // homogeneous delay
    std::string delay_down_file;
    std::string delay_right_file;
    SimSettings sim;
    HistorySettings history;
    std::uint64_t seed = 0;

    bool has_delay_files() const { return !delay_down_file.empty(); }

    double homogeneous_tau() const {
        if (!tau) throw ConfigError("/delay/homogeneous", "a homogeneous delay is required for this command");
        return *tau;
    }

    nlohmann::json to_json() const;
};

namespace detail {

using nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) { return base + "/" + key; }

inline void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError(join_path(path, key), "unknown key");
}

inline double get_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
}

inline int get_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<int>();
}

inline std::string get_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(join_path(path, key), "missing required field");
    return *it;
}

inline HistoryKind parse_history_kind(const std::string& s, const std::string& path) {
    if (s == "constant") return HistoryKind::Constant;
    if (s == "random") return HistoryKind::Random;
    if (s == "kick") return HistoryKind::Kick;
    if (s == "planewave") return HistoryKind::PlaneWave;
    if (s == "encoded") return HistoryKind::Encoded;
    throw ConfigError(path, "unknown history kind '" + s + "'");
}

inline const char* history_kind_name(HistoryKind k) {
    switch (k) {
        case HistoryKind::Constant: return "constant";
        case HistoryKind::Random: return "random";
        case HistoryKind::Kick: return "kick";
        case HistoryKind::PlaneWave: return "planewave";
        case HistoryKind::Encoded: return "encoded";
    }
    return "constant";
}

}  // namespace detail

/// Parses and validates a JSON run configuration, applying defaults.
/// Throws ConfigError naming the offending field.
inline RunConfig parse_config(const nlohmann::json& doc) {
    using namespace detail;
    RunConfig cfg;
    check_keys(doc, "", {"model", "M", "N", "params", "C", "delay", "sim", "history", "seed", "alpha", "beta", "I", "tau"});

    std::string model = get_string(require(doc, "model", ""), "/model");
    if (model != "sl" && model != "fhn") throw ConfigError("/model", "must be \"sl\" or \"fhn\"");

    cfg.lattice.rows = get_int(require(doc, "M", ""), "/M");
    cfg.lattice.cols = get_int(require(doc, "N", ""), "/N");
    if (cfg.lattice.rows < 1) throw ConfigError("/M", "must be >= 1");
    if (cfg.lattice.cols < 1) throw ConfigError("/N", "must be >= 1");

    cfg.lattice.coupling = get_number(require(doc, "C", ""), "/C");
    if (cfg.lattice.coupling < 0.0) throw ConfigError("/C", "must be >= 0");

    json params = json::object();
    if (doc.contains("params")) {
        params = doc["params"];
        if (!params.is_object()) throw ConfigError("/params", "expected an object");
    }
    // Top-level shorthands fold into params; giving both is ambiguous.
    for (const char* key : {"alpha", "beta", "I"}) {
        if (!doc.contains(key)) continue;
        if (params.contains(key)) throw ConfigError(std::string("/") + key, "given both at top level and in params");
        params[key] = doc[key];
    }

    if (model == "sl") {
        if (doc.contains("I")) throw ConfigError("/I", "not a Stuart-Landau parameter");
        check_keys(params, "/params", {"alpha", "beta"});
        SlParams p;
        p.alpha = get_number(require(params, "alpha", "/params"), "/params/alpha");
        p.beta = get_number(require(params, "beta", "/params"), "/params/beta");
        cfg.lattice.params = p;
    } else {
        for (const char* key : {"alpha", "beta"})
            if (doc.contains(key)) throw ConfigError(std::string("/") + key, "not a FitzHugh-Nagumo parameter");
        check_keys(params, "/params", {"I", "a", "b", "eps", "v_r"});
        FhnParams p;
        p.current = get_number(require(params, "I", "/params"), "/params/I");
        if (params.contains("a")) p.a = get_number(params["a"], "/params/a");
        if (params.contains("b")) p.b = get_number(params["b"], "/params/b");
        if (params.contains("eps")) p.eps = get_number(params["eps"], "/params/eps");
        if (params.contains("v_r")) p.v_r = get_number(params["v_r"], "/params/v_r");
        if (p.b == 0.0) throw ConfigError("/params/b", "must be nonzero");
        if (p.eps <= 0.0) throw ConfigError("/params/eps", "must be > 0");
        cfg.lattice.params = p;
    }

    if (doc.contains("tau") && doc.contains("delay")) throw ConfigError("/tau", "given together with /delay");
    if (doc.contains("tau")) {
        cfg.tau = get_number(doc["tau"], "/tau");
        if (*cfg.tau <= 0.0) throw ConfigError("/tau", "must be > 0");
    } else if (doc.contains("delay")) {
        const json& d = doc["delay"];
        check_keys(d, "/delay", {"homogeneous", "files"});
        if (d.contains("homogeneous") == d.contains("files"))
            throw ConfigError("/delay", "exactly one of \"homogeneous\" or \"files\" is required");
        if (d.contains("homogeneous")) {
            cfg.tau = get_number(d["homogeneous"], "/delay/homogeneous");
            if (*cfg.tau <= 0.0) throw ConfigError("/delay/homogeneous", "must be > 0");
        } else {
            const json& f = d["files"];
            check_keys(f, "/delay/files", {"down", "right"});
            cfg.delay_down_file = get_string(require(f, "down", "/delay/files"), "/delay/files/down");
            cfg.delay_right_file = get_string(require(f, "right", "/delay/files"), "/delay/files/right");
        }
    } else {
        throw ConfigError("/delay", "missing required field");
    }

    if (doc.contains("sim")) {
        const json& s = doc["sim"];
        check_keys(s, "/sim", {"t_end", "dt", "record_every", "t_discard", "threads"});
        if (s.contains("t_end")) {
            cfg.sim.t_end = get_number(s["t_end"], "/sim/t_end");
            if (cfg.sim.t_end <= 0.0) throw ConfigError("/sim/t_end", "must be > 0");
        }
        if (s.contains("dt")) {
            cfg.sim.dt = get_number(s["dt"], "/sim/dt");
            if (*cfg.sim.dt <= 0.0) throw ConfigError("/sim/dt", "must be > 0");
        }
        if (s.contains("record_every")) {
            cfg.sim.record_every = get_int(s["record_every"], "/sim/record_every");
            if (cfg.sim.record_every < 1) throw ConfigError("/sim/record_every", "must be >= 1");
        }
        if (s.contains("t_discard")) {
            cfg.sim.t_discard = get_number(s["t_discard"], "/sim/t_discard");
            if (*cfg.sim.t_discard < 0.0) throw ConfigError("/sim/t_discard", "must be >= 0");
        }
        if (s.contains("threads")) {
            cfg.sim.threads = get_int(s["threads"], "/sim/threads");
            if (cfg.sim.threads < 0) throw ConfigError("/sim/threads", "must be >= 0");
        }
    }

    cfg.history.kind = model == "sl" ? HistoryKind::Random : HistoryKind::Kick;
    if (cfg.history.kind == HistoryKind::Kick) cfg.history.amplitude = 0.8;
    if (doc.contains("history")) {
        const json& h = doc["history"];
        check_keys(h, "/history", {"kind", "amplitude", "width", "noise", "l", "j", "index", "eta", "settle"});
        if (h.contains("kind")) {
            cfg.history.kind = parse_history_kind(get_string(h["kind"], "/history/kind"), "/history/kind");
            cfg.history.amplitude = cfg.history.kind == HistoryKind::Kick ? 0.8 : 0.1;
        }
        if (h.contains("amplitude")) cfg.history.amplitude = get_number(h["amplitude"], "/history/amplitude");
        if (h.contains("width")) {
            cfg.history.width = get_number(h["width"], "/history/width");
            if (cfg.history.width <= 0.0) throw ConfigError("/history/width", "must be > 0");
        }
        if (h.contains("noise")) {
            cfg.history.noise = get_number(h["noise"], "/history/noise");
            if (cfg.history.noise < 0.0) throw ConfigError("/history/noise", "must be >= 0");
        }
        if (h.contains("l")) cfg.history.mode_l = get_int(h["l"], "/history/l");
        if (h.contains("j")) cfg.history.mode_j = get_int(h["j"], "/history/j");
        if (h.contains("index")) cfg.history.root_index = get_int(h["index"], "/history/index");
        if (h.contains("eta")) cfg.history.eta_file = get_string(h["eta"], "/history/eta");
        if (h.contains("settle")) {
            cfg.history.settle = get_number(h["settle"], "/history/settle");
            if (cfg.history.settle < 0.0) throw ConfigError("/history/settle", "must be >= 0");
        }
        if (cfg.history.kind == HistoryKind::PlaneWave && model != "sl")
            throw ConfigError("/history/kind", "planewave history requires the sl model");
        if (cfg.history.kind == HistoryKind::Encoded && cfg.history.eta_file.empty())
            throw ConfigError("/history/eta", "missing required field for encoded history");
    }

    if (doc.contains("seed")) {
        const json& s = doc["seed"];
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
            throw ConfigError("/seed", "expected a non-negative integer");
        cfg.seed = s.get<std::uint64_t>();
    }
    return cfg;
}

inline RunConfig parse_config(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

inline RunConfig parse_config(const char* text) { return parse_config(std::string(text)); }

/// Fully resolved configuration with all defaults spelled out.
inline nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["model"] = to_string(lattice.model());
    j["M"] = lattice.rows;
    j["N"] = lattice.cols;
    if (lattice.model() == NodeModel::StuartLandau) {
        j["params"] = {{"alpha", lattice.sl().alpha}, {"beta", lattice.sl().beta}};
    } else {
        const auto& p = lattice.fhn();
        j["params"] = {{"I", p.current}, {"a", p.a}, {"b", p.b}, {"eps", p.eps}, {"v_r", p.v_r}};
    }
    j["C"] = lattice.coupling;
    if (tau)
        j["delay"] = {{"homogeneous", *tau}};
    else
        j["delay"] = {{"files", {{"down", delay_down_file}, {"right", delay_right_file}}}};
    j["sim"] = {{"t_end", sim.t_end}, {"record_every", sim.record_every}, {"threads", sim.threads}};
    if (sim.dt) j["sim"]["dt"] = *sim.dt;
    if (sim.t_discard) j["sim"]["t_discard"] = *sim.t_discard;
    nlohmann::json h = {{"kind", detail::history_kind_name(history.kind)},
                        {"amplitude", history.amplitude},
                        {"width", history.width},
                        {"noise", history.noise},
                        {"settle", history.settle}};
    if (history.kind == HistoryKind::PlaneWave) {
        h["l"] = history.mode_l;
        h["j"] = history.mode_j;
        h["index"] = history.root_index;
    }
    if (!history.eta_file.empty()) h["eta"] = history.eta_file;
    j["history"] = h;
    j["seed"] = seed;
    return j;
}

}  // namespace dlattice
