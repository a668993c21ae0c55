// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "dlattice/dlattice.hpp"

using namespace dlattice;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double time_limit;  // seconds; <= 0 means none
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// 1 ------------------------------------------------------------------------

Outcome hopf_asymptote() {
    const double a20 = sl_hopf_threshold(0.5, 2.0, 20.0, 3, 3);
    const double a200 = sl_hopf_threshold(0.5, 2.0, 200.0, 3, 3);
    const double d20 = std::abs(a20 + 2.0), d200 = std::abs(a200 + 2.0);
    return {d20 <= 0.1 && d200 < d20, fmt("|aH+2| = %.3e (tau=20), %.3e (tau=200); tol 0.1", d20, d200)};
}

// 2 ------------------------------------------------------------------------

Outcome saddle_node() {
    const double c = fhn_saddle_node_C();
    return {std::abs(c - 1.46475) <= 1e-3, fmt("C_SN = %.6f; target 1.46475 +- 1e-3", c)};
}

// 3 ------------------------------------------------------------------------

Outcome eckhaus_closed_form() {
    std::mt19937_64 rng(301);
    std::uniform_real_distribution<double> ua(0.05, 5.0), uc(0.05, 5.0);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double alpha = ua(rng), C = uc(rng);
        const auto roots = sl_neutral_amplitude(alpha, C, 0.0);
        if (roots.empty()) return {false, fmt("no real root for alpha=%g C=%g", alpha, C)};
        const double want = (3.0 * alpha + std::sqrt(alpha * alpha + 8.0 * C * C)) / 4.0;
        worst = std::max(worst, std::abs(roots.back() - want));
    }
    return {worst <= 1e-9, fmt("max |a2 - closed form| = %.2e over 20 pairs; tol 1e-9", worst)};
}

// 4 ------------------------------------------------------------------------

Outcome trivial_exponent() {
    std::mt19937_64 rng(401);
    std::uniform_real_distribution<double> ua(0.2, 3.0), ub(-1.0, 1.0), uc(0.3, 3.0), ut(2.0, 40.0);
    std::uniform_int_distribution<int> un(1, 6);
    double worst = 0.0;
    int done = 0;
    while (done < 100) {
        const SlParams p{ua(rng), ub(rng)};
        const double C = uc(rng), tau = ut(rng);
        const auto waves = sl_enumerate_plane_waves(p, C, tau, un(rng), un(rng));
        if (waves.empty()) continue;
        const auto& w = waves[rng() % waves.size()];
        const double scale = sl_floquet_characteristic(w, 0.0, 0.0, C, tau)(0.0).scale;
        worst = std::max(worst, std::abs(sl_floquet_chi(w, 0.0, 0.0, 0.0, C, tau)) / scale);
        ++done;
    }
    return {worst <= 1e-10, fmt("max |chi(0)|/scale = %.2e over 100 waves; tol 1e-10", worst)};
}

// 5 ------------------------------------------------------------------------

Outcome pcs_symmetries() {
    std::mt19937_64 rng(501);
    std::uniform_real_distribution<double> ua(0.2, 3.0), ub(-1.0, 1.0), uc(0.3, 3.0), ut(5.0, 40.0);
    std::uniform_real_distribution<double> ui(-1.5, 0.8), ucf(0.5, 4.0);
    constexpr int G = 64;
    double e1 = 0.0, e2 = 0.0, e3 = 0.0, e4 = 0.0;
    int sets = 0;
    while (sets < 10) {
        const SlParams p{ua(rng), ub(rng)};
        const double C = uc(rng), tau = ut(rng);
        const auto waves = sl_enumerate_plane_waves(p, C, tau, 4, 5);
        if (waves.empty()) continue;
        const auto& w = waves[rng() % waves.size()];
        FhnParams fp;
        fp.current = ui(rng);
        const double Cf = ucf(rng);
        const auto lp = fhn_linearize(fhn_steady_states(fp, Cf)[0], fp, Cf);
        for (int i = 0; i < G; ++i)
            for (int j = 0; j < G; ++j) {
                const double om = -3.0 + 6.0 * (i + 0.5) / G;
                const double q = -std::numbers::pi + kTwoPi * (j + 0.5) / G;
                const auto y = sl_floquet_multipliers(w, C, om, q);
                const auto ys = sl_floquet_multipliers(w, C, om, q + std::numbers::pi);
                const auto yr = sl_floquet_multipliers(w, C, -om, -q);
                const double sc = std::max(1.0, std::abs(y.y_plus) + std::abs(y.y_minus));
                e1 = std::max({e1, std::abs(ys.y_plus + y.y_minus) / sc, std::abs(ys.y_minus + y.y_plus) / sc});
                e2 = std::max({e2, std::abs(yr.y_plus - std::conj(y.y_plus)) / sc,
                               std::abs(yr.y_minus - std::conj(y.y_minus)) / sc});
                const double g = fhn_hybrid_dispersion(lp, om, q);
                e3 = std::max(e3, std::abs(fhn_hybrid_dispersion(lp, -om, q) - g));
                e4 = std::max({e4, std::abs(fhn_hybrid_dispersion(lp, om, -q) - g),
                               std::abs(fhn_hybrid_dispersion(lp, om, q + std::numbers::pi) - g)});
            }
        ++sets;
    }
    const double worst = std::max({e1, e2, e3, e4});
    return {worst <= 1e-12,
            fmt("Y(q+pi)=-Y %.1e, Y(-w,-q)=conj Y %.1e, fhn even in w %.1e, fhn k-> -k,k+pi %.1e; tol 1e-12", e1, e2,
                e3, e4)};
}

// 6 ------------------------------------------------------------------------

Outcome large_delay_convergence() {
    const SlParams p{-2.0, 0.5};
    const double C = 2.0;
    std::vector<double> dist;
    std::string detail;
    for (double tau : {20.0, 50.0, 100.0, 200.0}) {
        const int J = static_cast<int>(std::ceil((2.0 + std::abs(p.beta)) * tau / kTwoPi)) + 3;
        double worst = 0.0;
        int used = 0;
        for (const auto& wv : enumerate_modes(3, 3)) {
            for (cplx r : sl_stst_eigenvalues(p, C, tau, wv, -J, J).roots) {
                if (std::abs(r.imag()) > 2.0) continue;
                const double g = sl_stst_pcs(p, C, wv.kminus(), r.imag());
                worst = std::max(worst, std::abs(r.real() - g / tau));
                ++used;
            }
        }
        dist.push_back(worst);
        detail += fmt("tau=%g: %.3e (%d roots)  ", tau, worst, used);
    }
    bool mono = true;
    for (std::size_t i = 1; i < dist.size(); ++i) mono = mono && dist[i] < dist[i - 1];
    return {mono, detail + "; must decrease"};
}

// 7 ------------------------------------------------------------------------

Outcome wave_count() {
    const int N = 20;
    const double C = 2.0, tau = 50.0;
    const auto branches = sl_wave_branches(SlParams{0.0, 0.5}, C, tau, N, N);
    const double est = 4.0 * C * tau * N * N / (std::numbers::pi * std::numbers::pi);
    const double ratio = branches.size() / est;
    return {ratio >= 0.85 && ratio <= 1.15,
            fmt("%zu waves / %.1f = %.4f; band [0.85, 1.15]", branches.size(), est, ratio)};
}

// 8 ------------------------------------------------------------------------

/// Largest distance of the lattice from the wave after removing the global phase.
double wave_departure(const Trajectory& tr, std::size_t k, const PlaneWave& w) {
    cplx proj = 0.0;
    for (int m = 0; m < tr.rows; ++m)
        for (int n = 0; n < tr.cols; ++n) {
            const cplx z(tr.value(k, m, n, 0), tr.value(k, m, n, 1));
            proj += z * std::exp(cplx(0.0, w.wv.k1 * m + w.wv.k2 * n));
        }
    const cplx rot = std::abs(proj) > 0.0 ? std::conj(proj) / std::abs(proj) : 1.0;
    double worst = 0.0;
    for (int m = 0; m < tr.rows; ++m)
        for (int n = 0; n < tr.cols; ++n) {
            const cplx z(tr.value(k, m, n, 0), tr.value(k, m, n, 1));
            const cplx want = w.a * std::exp(cplx(0.0, -(w.wv.k1 * m + w.wv.k2 * n)));
            worst = std::max(worst, std::abs(z * rot - want));
        }
    return worst;
}

Outcome verdict_vs_simulation() {
    const SlParams p{3.0, 0.5};
    const double C = 2.0, tau = 20.0;
    const int M = 10, N = 10;
    // Departure from 1e-4 noise to 1e-2 within 20 tau needs growth above ln(100)/(20 tau) ~ 0.012.
    const double min_unstable_growth = 0.05;
    auto waves = sl_enumerate_plane_waves(p, C, tau, M, N);
    std::mt19937_64 rng(801);
    std::shuffle(waves.begin(), waves.end(), rng);
    const auto grid = QGrid::lattice(M, N);
    std::vector<std::pair<PlaneWave, StabilityVerdict>> stable, unstable;
    int classified = 0;
    for (const auto& w : waves) {
        if (stable.size() == 5 && unstable.size() == 5) break;
        auto v = sl_floquet_exact(w, p, C, tau, grid);
        ++classified;
        if (v.cls == StabilityClass::Stable && stable.size() < 5)
            stable.emplace_back(w, v);
        else if (v.cls != StabilityClass::Stable && v.max_growth > min_unstable_growth && unstable.size() < 5)
            unstable.emplace_back(w, v);
    }
    if (stable.size() < 5 || unstable.size() < 5)
        return {false, fmt("found only %zu stable / %zu unstable waves", stable.size(), unstable.size())};

    SimOptions opt;
    opt.t_end = 20.0 * tau;
    opt.record_every = 100;
    opt.detect_spikes = false;
    const LatticeSpec spec{M, N, p, C};
    const auto delays = DelayMap::homogeneous(M, N, tau);
    int ok = 0;
    double worst_drift = 0.0, min_departure = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 11;
    for (const auto& [w, v] : stable) {
        auto tr = simulate(spec, delays, plane_wave_history(w, M, N, 1e-4, seed++), opt);
        const double d0 = wave_departure(tr, 0, w);
        double d_end = 0.0, d_max = 0.0;
        for (std::size_t k = 0; k < tr.frame_count(); ++k) {
            const double d = wave_departure(tr, k, w);
            d_max = std::max(d_max, d);
            if (tr.times[k] >= opt.t_end - tau) d_end = std::max(d_end, d);
        }
        const double drift = std::max(0.0, d_end - d0) / opt.t_end;
        worst_drift = std::max(worst_drift, drift);
        ok += drift < 1e-5 && d_max < 1e-2;
    }
    for (const auto& [w, v] : unstable) {
        auto tr = simulate(spec, delays, plane_wave_history(w, M, N, 1e-4, seed++), opt);
        double d_max = 0.0;
        for (std::size_t k = 0; k < tr.frame_count(); ++k) d_max = std::max(d_max, wave_departure(tr, k, w));
        min_departure = std::min(min_departure, d_max);
        ok += d_max > 1e-2;
    }
    return {ok == 10, fmt("%d/10 confirmed (%d classified); stable drift max %.2e/t (tol 1e-5), unstable departure "
                          "min %.2e (need > 1e-2)",
                          ok, classified, worst_drift, min_departure)};
}

// 9 ------------------------------------------------------------------------

Outcome pattern_pipeline() {
    const fs::path dir = fs::temp_directory_path() / "dlattice_acceptance_pattern";
    fs::remove_all(dir);
    fs::create_directories(dir);
    GrayImage img;
    img.rows = 20;
    img.cols = 30;
    img.maxval = 255;
    img.pixels.resize(600);
    for (int m = 0; m < 20; ++m)
        for (int n = 0; n < 30; ++n) {
            // A bright disc on a diagonal ramp.
            const double r = std::hypot(m - 9.5, n - 14.5);
            const double g = r < 6.0 ? 255.0 : 100.0 * (m + n) / 48.0;
            img.pixels[m * 30 + n] = static_cast<std::uint8_t>(std::lround(g));
        }
    write_pgm((dir / "image.pgm").string(), img);
    std::ofstream((dir / "fhn.json").string())
        << R"({"model": "fhn", "M": 1, "N": 1, "I": 0, "C": 3, "tau": 50, "sim": {"dt": 0.01, "record_every": 500}})";

    std::ostringstream out, err;
    auto call = [&](std::vector<std::string> a) {
        a.insert(a.begin(), "dlattice");
        return cli::run(a, out, err);
    };
    const auto d = [&](const char* s) { return (dir / s).string(); };
    if (call({"encode", "-c", d("fhn.json"), "--image", d("image.pgm"), "--eta-max-frac", "0.05", "-o", d("enc")}) ||
        call({"simulate", "-c", d("enc/simulate.json"), "-o", d("sim")}) ||
        call({"verify", "-c", d("enc/simulate.json"), "--run", d("sim"), "-o", d("ver")}))
        return {false, "pipeline failed: " + err.str()};
    std::ifstream in(d("ver/fidelity.json"));
    const auto fid = nlohmann::json::parse(in);
    if (fid["correlation"].is_null()) return {false, "correlation undefined"};
    const double corr = fid["correlation"].get<double>(), dev = fid["max_dev_over_T"].get<double>();
    const double T = fid["period"].get<double>();
    fs::remove_all(dir);
    return {corr > 0.99 && dev < 0.02 && fid["missing_nodes"].empty(),
            fmt("T = %.4f, correlation %.6f (> 0.99), max dev %.2e T (< 0.02)", T, corr, dev)};
}

// 10 -----------------------------------------------------------------------

Outcome shift_equivalence() {
    FhnParams p;
    p.current = 0.0;
    const double C = 3.0, tau = 50.0, dt = 0.01;
    const LatticeSpec spec{4, 4, p, C};

    // Period of the synchronized orbit.
    SimOptions ro;
    ro.t_end = 12.0 * tau;
    ro.record_every = 1000;
    const auto rest = fhn_steady_states(p, C).front();
    const double T = estimate_period(simulate(LatticeSpec{1, 1, p, C}, DelayMap::homogeneous(1, 1, tau),
                                              kick_history(rest, 0.8, 3.0), ro),
                                     6.0 * tau)
                         .period;

    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> u(0.0, 0.3 * T);
    ShiftField eta(4, 4);
    for (auto& x : eta.data()) x = u(rng);
    const double eta_min = *std::min_element(eta.data().begin(), eta.data().end());
    const double eta_max = *std::max_element(eta.data().begin(), eta.data().end());
    const auto delays = delays_from_timeshifts(eta, tau);
    const double span = 5.0 * T, t_ref = 4.0 * tau;

    SimOptions base;
    base.t_end = t_ref + span + eta_max + 1.0;
    base.record_every = 1000;
    base.dense_from = t_ref - history_span(delays, dt) + eta_min - 0.05;
    const auto hom = simulate(spec, DelayMap::homogeneous(4, 4, tau), random_history({rest.v, rest.w, rest.s}, 0.8, 4, 4, 5),
                              base);
    SimOptions opt;
    opt.t_end = span;
    opt.record_every = 7;
    const auto tr = simulate(spec, delays, shifted_history(hom.dense, eta, t_ref), opt);
    double worst = 0.0;
    std::vector<double> v(3);
    for (std::size_t k = 0; k < tr.frame_count(); ++k)
        for (int m = 0; m < 4; ++m)
            for (int n = 0; n < 4; ++n) {
                hom.dense.eval(m * 4 + n, t_ref + tr.times[k] + eta(m, n), v.data(), nullptr);
                for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(tr.value(k, m, n, c) - v[c]));
            }
    return {worst < 1e-6, fmt("max pointwise difference %.2e over %.1f time units (5 T, T = %.3f); tol 1e-6", worst,
                              span, T)};
}

// 11 -----------------------------------------------------------------------

Outcome rk4_order() {
    const SlParams p{1.0, 0.5};
    const double C = 1.5, tau = 1.0;
    PlaneWave wave{};
    for (const auto& w : sl_enumerate_plane_waves(p, C, tau, 3, 3))
        if (w.a > wave.a) wave = w;
    const LatticeSpec spec{3, 3, p, C};
    auto run = [&](double dt) {
        SimOptions opt;
        opt.t_end = 4.0;
        opt.dt = dt;
        opt.detect_spikes = false;
        return simulate(spec, DelayMap::homogeneous(3, 3, tau), plane_wave_history(wave, 3, 3, 0.05, 3), opt)
            .final_state;
    };
    auto diff = [](const std::vector<double>& a, const std::vector<double>& b) {
        double d = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
        return d;
    };
    const double dt = 0.02;
    const auto ref = run(dt / 4), a = run(dt), b = run(dt / 2);
    const double ea = diff(a, ref), eb = diff(b, ref);
    const double ratio = ea / eb;
    return {ratio >= 11.0 && ratio <= 21.0, fmt("err(dt)=%.3e err(dt/2)=%.3e ratio %.2f; band [11, 21]", ea, eb, ratio)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "hopf-threshold-asymptote", 10.0, hopf_asymptote},
        {2, "saddle-node-constant", 5.0, saddle_node},
        {3, "eckhaus-closed-form", 0.0, eckhaus_closed_form},
        {4, "trivial-floquet-exponent", 0.0, trivial_exponent},
        {5, "pcs-symmetries", 0.0, pcs_symmetries},
        {6, "large-delay-convergence", 60.0, large_delay_convergence},
        {7, "plane-wave-count-scaling", 0.0, wave_count},
        {8, "stability-verdict-vs-simulation", 300.0, verdict_vs_simulation},
        {9, "pattern-pipeline", 300.0, pattern_pipeline},
        {10, "shift-equivalence", 0.0, shift_equivalence},
        {11, "rk4-order", 0.0, rk4_order},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.time_limit > 0.0 && secs > c.time_limit) {
            r.pass = false;
            r.detail += fmt(" [over time limit %.0f s]", c.time_limit);
        }
        failed += !r.pass;
        std::printf("%s %2d %-32s %s (%.2f s)\n", r.pass ? "PASS" : "FAIL", c.id, c.name, r.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
