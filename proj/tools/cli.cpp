#include "cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dlattice/dlattice.hpp"

namespace dlattice::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "' for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("OpenSSL SHA-256 initialisation failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

namespace {

// ---------------------------------------------------------------------------
// Shared options and run bookkeeping

struct Common {
    std::string config;
    std::string out = "out";
    double alpha = 0, beta = 0, C = 0, I = 0, tau = 0, t_end = 0, dt = 0;
    int M = 0, N = 0, threads = 0;
    std::uint64_t seed = 0;
    std::multimap<std::string, CLI::Option*> set;  // one entry per subcommand

    bool given(const std::string& name) const {
        auto [lo, hi] = set.equal_range(name);
        for (auto it = lo; it != hi; ++it)
            if (it->second->count() > 0) return true;
        return false;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "JSON run configuration")->required();
    app->add_option("-o,--out", c.out, "output directory")->capture_default_str();
    c.set.emplace("alpha", app->add_option("--alpha", c.alpha, "override params.alpha"));
    c.set.emplace("beta", app->add_option("--beta", c.beta, "override params.beta"));
    c.set.emplace("C", app->add_option("--C", c.C, "override coupling C"));
    c.set.emplace("I", app->add_option("--I", c.I, "override params.I"));
    c.set.emplace("tau", app->add_option("--tau", c.tau, "override with a homogeneous delay"));
    c.set.emplace("M", app->add_option("--M", c.M, "override lattice rows"));
    c.set.emplace("N", app->add_option("--N", c.N, "override lattice columns"));
    c.set.emplace("t_end", app->add_option("--t-end", c.t_end, "override sim.t_end"));
    c.set.emplace("dt", app->add_option("--dt", c.dt, "override sim.dt"));
    c.set.emplace("threads", app->add_option("--threads", c.threads, "override sim.threads (0: DLATTICE_THREADS)"));
    c.set.emplace("seed", app->add_option("--seed", c.seed, "override seed"));
}

class Run {
public:
    Run(std::string command, const std::string& out_dir) : command_(std::move(command)), dir_(out_dir) {
        fs::create_directories(dir_);
        start_ = std::chrono::steady_clock::now();
    }

    /// Path of an output file; the file is listed in the manifest.
    std::string output(const std::string& name) {
        outputs_.push_back(name);
        return (dir_ / name).string();
    }
    void input(const std::string& path) {
        if (std::find(inputs_.begin(), inputs_.end(), path) == inputs_.end()) inputs_.push_back(path);
    }
    const fs::path& dir() const { return dir_; }

    void write_json(const std::string& name, const json& j) {
        std::ofstream out(output(name));
        if (!out) throw FormatError("cannot write '" + name + "'");
        out << j.dump(2) << '\n';
    }

    void finish() {
        json m;
        m["command"] = command_;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        json hashes = json::object();
        for (const auto& p : inputs_) hashes[p] = sha256_file(p);
        for (const auto& p : outputs_) hashes[p] = sha256_file((dir_ / p).string());
        m["hashes"] = hashes;
        m["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ofstream out(dir_ / "manifest.json");
        out << m.dump(2) << '\n';
    }

private:
    std::string command_;
    fs::path dir_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

std::ofstream open_csv(Run& run, const std::string& name, const std::string& header) {
    std::ofstream out(run.output(name));
    if (!out) throw FormatError("cannot write '" + name + "'");
    out << header << '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Configuration loading

void set_param(json& doc, const std::string& key, double v) {
    doc.erase(key);
    if (!doc.contains("params") || !doc["params"].is_object()) doc["params"] = json::object();
    doc["params"][key] = v;
}

void apply_overrides(json& doc, const Common& c) {
    if (!doc.is_object()) throw ConfigError("/", "expected an object");
    if (c.given("alpha")) set_param(doc, "alpha", c.alpha);
    if (c.given("beta")) set_param(doc, "beta", c.beta);
    if (c.given("I")) set_param(doc, "I", c.I);
    if (c.given("C")) doc["C"] = c.C;
    if (c.given("M")) doc["M"] = c.M;
    if (c.given("N")) doc["N"] = c.N;
    if (c.given("tau")) {
        doc.erase("delay");
        doc["tau"] = c.tau;
    }
    auto sim = [&]() -> json& {
        if (!doc.contains("sim") || !doc["sim"].is_object()) doc["sim"] = json::object();
        return doc["sim"];
    };
    if (c.given("t_end")) sim()["t_end"] = c.t_end;
    if (c.given("dt")) sim()["dt"] = c.dt;
    if (c.given("threads")) sim()["threads"] = c.threads;
    if (c.given("seed")) doc["seed"] = c.seed;
}

std::string resolve_near(const fs::path& base_dir, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base_dir / p).lexically_normal().string();
}

RunConfig load_config(const Common& c, Run& run) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("/", "cannot open config '" + c.config + "'");
    run.input(c.config);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    apply_overrides(doc, c);
    RunConfig cfg = parse_config(doc);
    // File references are relative to the configuration file.
    const fs::path base = fs::path(c.config).parent_path();
    cfg.delay_down_file = resolve_near(base, cfg.delay_down_file);
    cfg.delay_right_file = resolve_near(base, cfg.delay_right_file);
    cfg.history.eta_file = resolve_near(base, cfg.history.eta_file);
    run.write_json("config.resolved.json", cfg.to_json());
    return cfg;
}

DelayMap build_delays(const RunConfig& cfg, Run& run) {
    const int M = cfg.lattice.rows, N = cfg.lattice.cols;
    if (cfg.tau) return DelayMap::homogeneous(M, N, *cfg.tau);
    run.input(cfg.delay_down_file);
    run.input(cfg.delay_right_file);
    DelayMap d = read_delay_map(cfg.delay_down_file, cfg.delay_right_file);
    if (d.rows() != M || d.cols() != N) {
        std::ostringstream os;
        os << "delay matrices are " << d.rows() << "x" << d.cols() << ", lattice is " << M << "x" << N;
        throw ConfigError("/delay/files", os.str());
    }
    return d;
}

void require_sl(const RunConfig& cfg, const std::string& command) {
    if (cfg.lattice.model() != NodeModel::StuartLandau)
        throw ConfigError("/model", command + " requires the sl model");
}

FhnSteadyState lowest_rest_state(const RunConfig& cfg) {
    auto ss = fhn_steady_states(cfg.lattice.fhn(), cfg.lattice.coupling);
    if (ss.empty()) throw NumericalError("no FHN rest state in v in [-5, 5]");
    return ss.front();
}

std::vector<double> rest_vector(const RunConfig& cfg) {
    if (cfg.lattice.model() == NodeModel::StuartLandau) return {0.0, 0.0};
    auto s = lowest_rest_state(cfg);
    return {s.v, s.w, s.s};
}

std::string mode_cols(const WaveVector& wv) {
    return std::to_string(wv.l) + "," + std::to_string(wv.j) + "," + fmt17(wv.k1) + "," + fmt17(wv.k2);
}

// ---------------------------------------------------------------------------
// Synchronized reference orbit for encoded histories. A 1 x 1 torus couples
// the node to itself from both sides, which is exactly the synchronized
// dynamics of any M x N lattice with the same delay.

struct Reference {
    Trajectory tr;
    double settle = 0.0;
    double period = std::numeric_limits<double>::quiet_NaN();
};

Reference reference_orbit(const RunConfig& cfg, double tau, double dt, double t_end_extra) {
    LatticeSpec one = cfg.lattice;
    one.rows = one.cols = 1;
    const auto delays = DelayMap::homogeneous(1, 1, tau);
    HistoryInit init;
    if (one.model() == NodeModel::FitzHughNagumo)
        init = kick_history(lowest_rest_state(cfg), 0.8, 3.0);
    else
        init = constant_history({0.1, 0.0});
    Reference ref;
    ref.settle = cfg.history.settle > 0.0 ? cfg.history.settle : 10.0 * tau;
    SimOptions opt;
    opt.dt = dt;
    opt.t_end = ref.settle + t_end_extra;
    opt.record_every = 1000;
    opt.dense_from = ref.settle;
    opt.threads = 1;
    ref.tr = simulate(one, delays, init, opt);
    const auto& ev = ref.tr.node_spikes(0, 0);
    int after = 0;
    for (double t : ev) after += t >= ref.settle;
    if (after >= 3) ref.period = estimate_period(ref.tr, ref.settle).period;
    return ref;
}

/// Recovers the base delay from an encoded delay map and its shift field.
double base_delay(const DelayMap& d, const ShiftField& eta) {
    const int M = eta.rows(), N = eta.cols();
    const double tau = d.down(0, 0) + eta(0, 0) - eta.wrapped(-1, 0);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) {
            const double a = d.down(m, n) + eta(m, n) - eta.wrapped(m - 1, n);
            const double b = d.right(m, n) + eta(m, n) - eta.wrapped(m, n - 1);
            if (std::abs(a - tau) > 1e-9 * tau || std::abs(b - tau) > 1e-9 * tau)
                throw ConfigError("/history/eta", "delay files are not the time-shift transform of this shift field");
        }
    return tau;
}

// ---------------------------------------------------------------------------
// Commands

struct StstOpts {
    int branches = 10;
    double re_min = -1.5, re_max = 1.0, im_max = 3.0;
    int grid = 40;
};

void cmd_spectrum_stst(const Common& c, const StstOpts& o, std::ostream& log) {
    Run run("spectrum-stst", c.out);
    const RunConfig cfg = load_config(c, run);
    const double tau = cfg.homogeneous_tau();
    const auto modes = enumerate_modes(cfg.lattice);
    const double C = cfg.lattice.coupling;
    json summary;
    summary["model"] = to_string(cfg.lattice.model());
    if (cfg.lattice.model() == NodeModel::StuartLandau) {
        auto out = open_csv(run, "eigenvalues.csv", "l,j,k1,k2,branch,re,im");
        double max_re = -std::numeric_limits<double>::infinity();
        json best;
        for (const auto& wv : modes) {
            auto rs = sl_stst_eigenvalues(cfg.lattice.sl(), C, tau, wv, -o.branches, o.branches);
            const bool single = rs.roots.size() == 1;
            for (std::size_t b = 0; b < rs.roots.size(); ++b) {
                const cplx r = rs.roots[b];
                const int branch = single ? 0 : static_cast<int>(b) - o.branches;
                out << mode_cols(wv) << ',' << branch << ',' << fmt17(r.real()) << ',' << fmt17(r.imag()) << '\n';
                if (r.real() > max_re) {
                    max_re = r.real();
                    best = {{"l", wv.l}, {"j", wv.j}, {"re", r.real()}, {"im", r.imag()}};
                }
            }
        }
        summary["max_re"] = max_re;
        summary["stable"] = max_re < 0.0;
        summary["rightmost"] = best;
    } else {
        auto out = open_csv(run, "eigenvalues.csv", "state,v,l,j,k1,k2,re,im");
        const auto states = fhn_steady_states(cfg.lattice.fhn(), C);
        const Window win{o.re_min, o.re_max, -o.im_max, o.im_max};
        summary["states"] = json::array();
        for (std::size_t s = 0; s < states.size(); ++s) {
            const auto lp = fhn_linearize(states[s], cfg.lattice.fhn(), C);
            double max_re = -std::numeric_limits<double>::infinity();
            for (const auto& wv : modes) {
                auto rs = fhn_char_roots(lp, tau, wv, win, o.grid, o.grid);
                for (cplx r : rs.roots) {
                    out << s << ',' << fmt17(states[s].v) << ',' << mode_cols(wv) << ',' << fmt17(r.real()) << ','
                        << fmt17(r.imag()) << '\n';
                    max_re = std::max(max_re, r.real());
                }
            }
            summary["states"].push_back(
                {{"v", states[s].v}, {"w", states[s].w}, {"s", states[s].s}, {"max_re", max_re}, {"stable", max_re < 0.0}});
        }
    }
    run.write_json("summary.json", summary);
    run.finish();
    log << "spectrum-stst: wrote " << run.dir().string() << "\n";
}

struct DispersionOpts {
    int n_omega = 201;
    int n_k = 64;
    double omega_max = -1.0;  // < 0: |beta| + 3 (sl), 3 (fhn)
};

void cmd_dispersion(const Common& c, const DispersionOpts& o, std::ostream& log) {
    Run run("dispersion", c.out);
    const RunConfig cfg = load_config(c, run);
    if (o.n_omega < 2 || o.n_k < 1) throw ConfigError("--n-omega/--n-k", "grid too small");
    const double C = cfg.lattice.coupling;
    const bool sl = cfg.lattice.model() == NodeModel::StuartLandau;
    const double wmax = o.omega_max > 0.0 ? o.omega_max : (sl ? std::abs(cfg.lattice.sl().beta) + 3.0 : 3.0);
    auto omega_at = [&](int i) { return -wmax + 2.0 * wmax * i / (o.n_omega - 1); };
    auto k_at = [&](int j) { return -std::numbers::pi + kTwoPi * (j + 1) / o.n_k; };
    double gmax = -std::numeric_limits<double>::infinity();
    if (sl) {
        auto out = open_csv(run, "dispersion.csv", "omega,k_minus,gamma");
        for (int j = 0; j < o.n_k; ++j)
            for (int i = 0; i < o.n_omega; ++i) {
                const double g = sl_stst_pcs(cfg.lattice.sl(), C, k_at(j), omega_at(i));
                gmax = std::max(gmax, g);
                out << fmt17(omega_at(i)) << ',' << fmt17(k_at(j)) << ',' << fmt17(g) << '\n';
            }
    } else {
        auto out = open_csv(run, "dispersion.csv", "state,omega,k_minus,gamma");
        const auto states = fhn_steady_states(cfg.lattice.fhn(), C);
        for (std::size_t s = 0; s < states.size(); ++s) {
            const auto lp = fhn_linearize(states[s], cfg.lattice.fhn(), C);
            for (int j = 0; j < o.n_k; ++j)
                for (int i = 0; i < o.n_omega; ++i) {
                    const double g = fhn_hybrid_dispersion(lp, omega_at(i), k_at(j));
                    gmax = std::max(gmax, g);
                    out << s << ',' << fmt17(omega_at(i)) << ',' << fmt17(k_at(j)) << ',' << fmt17(g) << '\n';
                }
        }
    }
    run.write_json("summary.json", {{"max_gamma", gmax}, {"omega_max", wmax}});
    run.finish();
    log << "dispersion: wrote " << run.dir().string() << "\n";
}

void cmd_planewaves(const Common& c, bool classify, std::ostream& log) {
    Run run("planewaves", c.out);
    const RunConfig cfg = load_config(c, run);
    require_sl(cfg, "planewaves");
    const double tau = cfg.homogeneous_tau(), C = cfg.lattice.coupling;
    const auto& p = cfg.lattice.sl();
    const int M = cfg.lattice.rows, N = cfg.lattice.cols;
    const auto branches = sl_wave_branches(p, C, tau, M, N);
    const auto waves = sl_enumerate_plane_waves(p, C, tau, M, N);
    std::string header = "l,j,k1,k2,kplus,kminus,omega,a,k_tau,R";
    if (classify) header += ",class,max_growth";
    auto out = open_csv(run, "waves.csv", header);
    std::map<std::string, int> counts;
    for (const auto& w : waves) {
        out << mode_cols(w.wv) << ',' << fmt17(w.wv.kplus()) << ',' << fmt17(w.wv.kminus()) << ',' << fmt17(w.omega) << ','
            << fmt17(w.a) << ',' << fmt17(w.k_tau) << ',' << fmt17(w.R);
        if (classify) {
            auto v = sl_floquet_exact(w, p, C, tau, QGrid::lattice(M, N));
            out << ',' << to_string(v.cls) << ',' << fmt17(v.max_growth);
            ++counts[to_string(v.cls)];
        }
        out << '\n';
    }
    json summary{{"count", waves.size()}, {"branches", branches.size()}, {"modes", M * N}};
    if (classify) summary["classes"] = counts;
    run.write_json("summary.json", summary);
    run.finish();
    log << "planewaves: " << waves.size() << " waves\n";
}

struct FloquetOpts {
    int l = 0, j = 0, index = -1;
    std::string grid = "lattice";
    int nq = 64;
};

PlaneWave select_wave(const RunConfig& cfg, int l, int j, int index) {
    const auto& p = cfg.lattice.sl();
    const int M = cfg.lattice.rows, N = cfg.lattice.cols;
    if (l < 0 || l >= M || j < 0 || j >= N) throw ConfigError("--l/--j", "mode index outside the lattice");
    const auto wv = WaveVector::from_indices(l, j, M, N);
    std::vector<PlaneWave> mode;
    for (const auto& w : sl_enumerate_plane_waves(p, cfg.lattice.coupling, cfg.homogeneous_tau(), M, N))
        if (w.wv.l == wv.l && w.wv.j == wv.j) mode.push_back(w);
    if (mode.empty()) throw ConfigError("--l/--j", "mode has no plane wave with a^2 > 0");
    if (index < 0) return *std::max_element(mode.begin(), mode.end(), [](auto& a, auto& b) { return a.a < b.a; });
    if (index >= static_cast<int>(mode.size()))
        throw ConfigError("--index", "mode has only " + std::to_string(mode.size()) + " waves");
    return mode[index];
}

json wave_json(const PlaneWave& w) {
    return {{"l", w.wv.l}, {"j", w.wv.j}, {"k1", w.wv.k1}, {"k2", w.wv.k2}, {"omega", w.omega},
            {"a", w.a},    {"k_tau", w.k_tau}, {"R", w.R}};
}

void cmd_floquet(const Common& c, const FloquetOpts& o, std::ostream& log) {
    Run run("floquet", c.out);
    const RunConfig cfg = load_config(c, run);
    require_sl(cfg, "floquet");
    const auto w = select_wave(cfg, o.l, o.j, o.index);
    QGrid grid;
    if (o.grid == "lattice")
        grid = QGrid::lattice(cfg.lattice.rows, cfg.lattice.cols);
    else if (o.grid == "continuous")
        grid = QGrid::continuous(o.nq, o.nq);
    else
        throw ConfigError("--grid", "expected lattice or continuous");
    std::vector<FloquetRoots> spec;
    auto v = sl_floquet_exact(w, cfg.lattice.sl(), cfg.lattice.coupling, cfg.homogeneous_tau(), grid, {}, &spec);
    auto out = open_csv(run, "floquet.csv", "qplus,qminus,re,im,strong");
    for (const auto& fr : spec)
        for (std::size_t i = 0; i < fr.roots.size(); ++i)
            out << fmt17(fr.qplus) << ',' << fmt17(fr.qminus) << ',' << fmt17(fr.roots[i].real()) << ','
                << fmt17(fr.roots[i].imag()) << ',' << (fr.strong[i] ? 1 : 0) << '\n';
    run.write_json("verdict.json",
                   {{"class", to_string(v.cls)},
                    {"max_growth", v.max_growth},
                    {"witness",
                     {{"omega", v.witness.omega}, {"qplus", v.witness.qplus}, {"qminus", v.witness.qminus},
                      {"re", v.witness.lambda.real()}, {"im", v.witness.lambda.imag()}}},
                    {"wave", wave_json(w)}});
    run.finish();
    log << "floquet: " << to_string(v.cls) << " (max growth " << v.max_growth << ")\n";
}

struct HopfOpts {
    double i_min = -3.0, i_max = 3.0;
};

void cmd_hopf(const Common& c, const HopfOpts& o, std::ostream& log) {
    Run run("hopf", c.out);
    const RunConfig cfg = load_config(c, run);
    const double tau = cfg.homogeneous_tau(), C = cfg.lattice.coupling;
    if (cfg.lattice.model() == NodeModel::StuartLandau) {
        const double a = sl_hopf_threshold(cfg.lattice.sl().beta, C, tau, cfg.lattice.rows, cfg.lattice.cols);
        run.write_json("hopf.json", {{"alpha_H", a}, {"beta", cfg.lattice.sl().beta}, {"C", C}, {"tau", tau}});
        log << "hopf: alpha_H = " << a << "\n";
    } else {
        auto out = open_csv(run, "hopf.csv", "l,j,k1,k2,I,omega,v");
        int count = 0;
        for (const auto& wv : enumerate_modes(cfg.lattice))
            for (const auto& h : fhn_hopf_points(cfg.lattice.fhn(), C, tau, wv, o.i_min, o.i_max)) {
                out << mode_cols(wv) << ',' << fmt17(h.current) << ',' << fmt17(h.omega) << ',' << fmt17(h.v) << '\n';
                ++count;
            }
        run.write_json("summary.json", {{"count", count}, {"i_min", o.i_min}, {"i_max", o.i_max}});
        log << "hopf: " << count << " points\n";
    }
    run.finish();
}

struct SimulateOpts {
    bool csv = false;
};

void cmd_simulate(const Common& c, const SimulateOpts& o, std::ostream& log) {
    Run run("simulate", c.out);
    const RunConfig cfg = load_config(c, run);
    const int M = cfg.lattice.rows, N = cfg.lattice.cols;
    const DelayMap delays = build_delays(cfg, run);
    const double dt = cfg.sim.dt ? *cfg.sim.dt : default_dt(delays);
    const auto& h = cfg.history;

    std::optional<Reference> ref;  // must outlive simulate() for encoded histories
    ShiftField eta;
    HistoryInit init;
    switch (h.kind) {
        case HistoryKind::Constant: {
            auto base = rest_vector(cfg);
            base[0] += h.amplitude;
            init = constant_history(base);
            break;
        }
        case HistoryKind::Random:
            init = random_history(rest_vector(cfg), h.amplitude, M, N, cfg.seed);
            break;
        case HistoryKind::Kick:
            if (cfg.lattice.model() != NodeModel::FitzHughNagumo) throw ConfigError("/history/kind", "kick requires the fhn model");
            init = kick_history(lowest_rest_state(cfg), h.amplitude, h.width);
            break;
        case HistoryKind::PlaneWave: {
            require_sl(cfg, "planewave history");
            init = plane_wave_history(select_wave(cfg, h.mode_l, h.mode_j, h.root_index), M, N, h.noise, cfg.seed);
            break;
        }
        case HistoryKind::Encoded: {
            run.input(h.eta_file);
            eta = read_matrix_csv(h.eta_file);
            if (eta.rows() != M || eta.cols() != N) throw ConfigError("/history/eta", "shift field shape does not match lattice");
            // With a homogeneous delay the shift field only sets the initial phases.
            const double tau = cfg.tau ? *cfg.tau : base_delay(delays, eta);
            const double lo = *std::min_element(eta.data().begin(), eta.data().end());
            const double hi = *std::max_element(eta.data().begin(), eta.data().end());
            const double span = history_span(delays, dt);
            ref = reference_orbit(cfg, tau, dt, span + (hi - lo) + 1.0);
            init = shifted_history(ref->tr.dense, eta, ref->settle + span - lo + 0.5 * dt);
            break;
        }
    }

    SimOptions opt;
    opt.t_end = cfg.sim.t_end;
    opt.dt = dt;
    opt.record_every = cfg.sim.record_every;
    opt.threads = cfg.sim.threads;
    auto tr = simulate(cfg.lattice, delays, init, opt);

    write_frames_raw(run.output("frames.bin"), run.output("frames.json"), tr);
    if (o.csv) write_frames_csv(run.output("frames.csv"), tr);
    write_spikes_csv(run.output("spikes.csv"), tr.spikes, N);
    {
        auto out = open_csv(run, "final_state.csv", tr.dim == 2 ? "m,n,c0,c1" : "m,n,c0,c1,c2");
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n) {
                out << m << ',' << n;
                for (int k = 0; k < tr.dim; ++k) out << ',' << fmt17(tr.final_state[(m * N + n) * tr.dim + k]);
                out << '\n';
            }
    }
    const double t_discard = cfg.sim.t_discard ? *cfg.sim.t_discard : default_discard(delays);
    json summary{{"t_end", tr.t_final}, {"dt", dt}, {"frames", tr.frame_count()}, {"t_discard", t_discard}};
    try {
        auto pe = estimate_period(tr, t_discard);
        summary["period"] = pe.period;
        summary["period_std"] = pe.stddev;
        summary["events"] = pe.events;
    } catch (const NumericalError&) {
        summary["period"] = nullptr;
    }
    if (ref && std::isfinite(ref->period)) summary["reference_period"] = ref->period;
    run.write_json("summary.json", summary);
    run.finish();
    log << "simulate: " << tr.frame_count() << " frames to " << run.dir().string() << "\n";
}

struct EncodeOpts {
    std::string image;
    double eta_min = 0.0;
    double eta_max = -1.0;
    double eta_max_frac = -1.0;
    double sim_t_end = -1.0;
    int record_every = 0;  // 0: keep the config's value
};

void cmd_encode(const Common& c, const EncodeOpts& o, std::ostream& log) {
    Run run("encode", c.out);
    run.input(o.image);
    const GrayImage img = read_pgm(o.image);
    RunConfig cfg;
    {
        std::ifstream in(c.config);
        if (!in) throw ConfigError("/", "cannot open config '" + c.config + "'");
        run.input(c.config);
        json doc;
        try {
            in >> doc;
        } catch (const json::parse_error& e) {
            throw ConfigError("/", std::string("invalid JSON: ") + e.what());
        }
        apply_overrides(doc, c);
        // The lattice takes the image's shape.
        doc["M"] = img.rows;
        doc["N"] = img.cols;
        cfg = parse_config(doc);
    }
    const double tau = cfg.homogeneous_tau();
    const double dt = cfg.sim.dt ? *cfg.sim.dt : std::min(0.01, tau / 8.0);

    double period = std::numeric_limits<double>::quiet_NaN();
    double eta_max = o.eta_max;
    if (o.eta_max_frac >= 0.0) {
        if (o.eta_max >= 0.0) throw ConfigError("--eta-max", "give either --eta-max or --eta-max-frac");
        auto ref = reference_orbit(cfg, tau, dt, 20.0 * tau);
        period = ref.period;
        if (!std::isfinite(period)) throw NumericalError("synchronized reference orbit does not oscillate; cannot scale eta by T");
        eta_max = o.eta_min + o.eta_max_frac * period;
    }
    if (eta_max < 0.0) throw ConfigError("--eta-max", "required (or --eta-max-frac)");
    const ShiftField eta = eta_from_image(img, o.eta_min, eta_max, img.rows, img.cols);
    const DelayMap delays = delays_from_timeshifts(eta, tau);

    write_matrix_csv(run.output("eta.csv"), eta);
    write_delay_map(run.output("delay_down.csv"), run.output("delay_right.csv"), delays);

    json sim = cfg.to_json();
    sim.erase("delay");
    sim["delay"] = {{"files", {{"down", "delay_down.csv"}, {"right", "delay_right.csv"}}}};
    sim["history"] = {{"kind", "encoded"}, {"eta", "eta.csv"}};
    if (cfg.history.settle > 0.0) sim["history"]["settle"] = cfg.history.settle;
    const double T = std::isfinite(period) ? period : tau;
    sim["sim"]["t_end"] = o.sim_t_end > 0.0 ? o.sim_t_end : 2.0 * delays.max_delay() + 10.0 * T;
    sim["sim"]["t_discard"] = delays.max_delay();
    if (o.record_every > 0) sim["sim"]["record_every"] = o.record_every;
    sim["sim"]["dt"] = dt;
    run.write_json("simulate.json", sim);

    json info{{"tau", tau}, {"eta_min", o.eta_min}, {"eta_max", eta_max}, {"M", img.rows}, {"N", img.cols},
              {"min_delay", delays.min_delay()}, {"max_delay", delays.max_delay()}};
    info["period"] = std::isfinite(period) ? json(period) : json(nullptr);
    run.write_json("encode.json", info);
    run.finish();
    log << "encode: " << img.rows << "x" << img.cols << " shift field to " << run.dir().string() << "\n";
}

struct VerifyOpts {
    std::string run_dir;
    std::string eta;
    double period = -1.0;
};

void cmd_verify(const Common& c, const VerifyOpts& o, std::ostream& log) {
    Run run("verify", c.out);
    const RunConfig cfg = load_config(c, run);
    const int M = cfg.lattice.rows, N = cfg.lattice.cols;
    const std::string eta_path = !o.eta.empty() ? o.eta : cfg.history.eta_file;
    if (eta_path.empty()) throw ConfigError("--eta", "no shift field given and the config has none");
    run.input(eta_path);
    const ShiftField eta = read_matrix_csv(eta_path);
    if (eta.rows() != M || eta.cols() != N) throw ConfigError("--eta", "shift field shape does not match lattice");
    const std::string spikes_path = (fs::path(o.run_dir) / "spikes.csv").string();
    run.input(spikes_path);
    const auto spikes = read_spikes_csv(spikes_path, M, N);
    const DelayMap delays = build_delays(cfg, run);
    const double t_discard = cfg.sim.t_discard ? *cfg.sim.t_discard : default_discard(delays);
    const double T = o.period > 0.0 ? o.period : estimate_period(spikes[0], t_discard).period;
    auto rep = verify_pattern(spikes, eta, T, t_discard);
    json j = rep.to_json();
    j["period"] = T;
    j["max_dev_over_T"] = rep.max_dev / T;
    j["t_from"] = t_discard;
    run.write_json("fidelity.json", j);
    {
        auto out = open_csv(run, "offsets.csv", "m,n,measured,target");
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n) {
                const double want = std::fmod(std::fmod(eta(m, n) - eta(0, 0), T) + T, T);
                out << m << ',' << n << ',' << fmt17(rep.measured(m, n)) << ',' << fmt17(want) << '\n';
            }
    }
    run.finish();
    log << "verify: correlation " << (rep.correlation_defined ? std::to_string(rep.correlation) : "undefined")
        << ", max deviation " << rep.max_dev / T << " T\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Delay-coupled oscillator lattices: spectra, plane waves, simulation and pattern encoding"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    Common common;
    StstOpts ssto;
    auto* sst = app.add_subcommand("spectrum-stst", "eigenvalues of the homogeneous steady state");
    add_common(sst, common);
    sst->add_option("--branches", ssto.branches, "sl: Lambert W branches -K..K")->capture_default_str();
    sst->add_option("--re-min", ssto.re_min, "fhn: root window")->capture_default_str();
    sst->add_option("--re-max", ssto.re_max, "fhn: root window")->capture_default_str();
    sst->add_option("--im-max", ssto.im_max, "fhn: root window half height")->capture_default_str();
    sst->add_option("--grid", ssto.grid, "fhn: seed grid per axis")->capture_default_str();

    DispersionOpts dso;
    auto* dsp = app.add_subcommand("dispersion", "large-delay growth surface gamma(omega, k-)");
    add_common(dsp, common);
    dsp->add_option("--n-omega", dso.n_omega)->capture_default_str();
    dsp->add_option("--n-k", dso.n_k)->capture_default_str();
    dsp->add_option("--omega-max", dso.omega_max, "default |beta|+3 (sl), 3 (fhn)");

    bool classify = false;
    auto* pw = app.add_subcommand("planewaves", "enumerate plane waves (sl)");
    add_common(pw, common);
    pw->add_flag("--classify", classify, "exact Floquet verdict per wave on the lattice q-grid");

    FloquetOpts flo;
    auto* fl = app.add_subcommand("floquet", "Floquet spectrum and verdict of one plane wave (sl)");
    add_common(fl, common);
    fl->add_option("--l", flo.l)->capture_default_str();
    fl->add_option("--j", flo.j)->capture_default_str();
    fl->add_option("--index", flo.index, "wave within the mode; -1 picks the largest amplitude")->capture_default_str();
    fl->add_option("--grid", flo.grid, "lattice | continuous")->capture_default_str();
    fl->add_option("--nq", flo.nq, "continuous grid size per axis")->capture_default_str();

    HopfOpts hpo;
    auto* hp = app.add_subcommand("hopf", "Hopf threshold (sl) or Hopf points in I (fhn)");
    add_common(hp, common);
    hp->add_option("--i-min", hpo.i_min)->capture_default_str();
    hp->add_option("--i-max", hpo.i_max)->capture_default_str();

    SimulateOpts smo;
    auto* sm = app.add_subcommand("simulate", "integrate the lattice");
    add_common(sm, common);
    sm->add_flag("--csv", smo.csv, "also write frames.csv");

    EncodeOpts eno;
    auto* en = app.add_subcommand("encode", "turn a grayscale image into a shift field and delay map");
    add_common(en, common);
    en->add_option("--image", eno.image, "8-bit PGM (P2/P5)")->required();
    en->add_option("--eta-min", eno.eta_min)->capture_default_str();
    en->add_option("--eta-max", eno.eta_max, "absolute maximal shift");
    en->add_option("--eta-max-frac", eno.eta_max_frac, "maximal shift as a fraction of the synchronized period");
    en->add_option("--sim-t-end", eno.sim_t_end, "t_end written to simulate.json");
    en->add_option("--record-every", eno.record_every, "snapshot cadence written to simulate.json");

    VerifyOpts vfo;
    auto* vf = app.add_subcommand("verify", "compare measured spike offsets with the encoded shift field");
    add_common(vf, common);
    vf->add_option("--run", vfo.run_dir, "output directory of simulate")->required();
    vf->add_option("--eta", vfo.eta, "shift field CSV (default: history.eta of the config)");
    vf->add_option("--period", vfo.period, "period T (default: estimated from node (0,0))");

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    std::string cmd = "dlattice";
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << cmd << ": " << e.what() << "\n";
        return kExitConfig;
    }
    const std::vector<std::pair<CLI::App*, std::function<void()>>> commands{
        {sst, [&] { cmd_spectrum_stst(common, ssto, out); }},
        {dsp, [&] { cmd_dispersion(common, dso, out); }},
        {pw, [&] { cmd_planewaves(common, classify, out); }},
        {fl, [&] { cmd_floquet(common, flo, out); }},
        {hp, [&] { cmd_hopf(common, hpo, out); }},
        {sm, [&] { cmd_simulate(common, smo, out); }},
        {en, [&] { cmd_encode(common, eno, out); }},
        {vf, [&] { cmd_verify(common, vfo, out); }},
    };
    try {
        for (const auto& [sub, fn] : commands)
            if (sub->parsed()) {
                cmd = sub->get_name();
                fn();
            }
    } catch (const ConfigError& e) {
        err << cmd << ": config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        err << cmd << ": input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainError& e) {
        err << cmd << ": invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << cmd << ": numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const fs::filesystem_error& e) {
        err << cmd << ": " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}

}  // namespace dlattice::cli
