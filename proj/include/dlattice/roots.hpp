#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dlattice/error.hpp"
#include "dlattice/lambertw.hpp"

namespace dlattice {

/// Axis-aligned rectangle in the complex plane.
struct Window {
    double re_min = -1.0;
    double re_max = 1.0;
    double im_min = -1.0;
    double im_max = 1.0;

    bool contains(cplx z, double margin = 0.0) const {
        return z.real() >= re_min - margin && z.real() <= re_max + margin && z.imag() >= im_min - margin &&
               z.imag() <= im_max + margin;
    }
    bool degenerate() const { return !(re_max > re_min) || !(im_max > im_min); }
};

/// Value, derivative and a magnitude scale (sum of term moduli) of a
/// holomorphic function at one point. The scale makes the residual test
/// relative, which matters for quasi-polynomials whose exponential terms
/// reach 1e20 and beyond at negative real parts.
struct HoloEval {
    cplx value;
    cplx derivative;
    double scale = 1.0;
};

using HoloFunction = std::function<HoloEval(cplx)>;

/// Converged, deduplicated roots inside a window.
struct RootSet {
    std::vector<cplx> roots;
    double tolerance = 1e-10;  // bound on |f| / scale at every root
    Window window;

    std::size_t size() const { return roots.size(); }
    bool empty() const { return roots.empty(); }

    /// Root with the largest real part; the set must be nonempty.
    cplx rightmost() const {
        if (roots.empty()) throw DomainError("rightmost() of an empty RootSet");
        return *std::max_element(roots.begin(), roots.end(),
                                 [](cplx a, cplx b) { return a.real() < b.real(); });
    }
};

struct NewtonOptions {
    int max_iterations = 80;
    double residual_tol = 1e-10;
    double dedup_radius = 1e-8;
};

/// Newton iteration from a single seed. Returns true and the root on success.
inline bool newton_polish(const HoloFunction& f, cplx seed, cplx& root, const NewtonOptions& opt = {}) {
    cplx z = seed;
    for (int it = 0; it < opt.max_iterations; ++it) {
        HoloEval e = f(z);
        if (!std::isfinite(e.value.real()) || !std::isfinite(e.value.imag())) return false;
        if (e.derivative == cplx(0.0, 0.0)) return false;
        cplx step = e.value / e.derivative;
        // Damp huge steps: the exponential terms make far jumps unreliable.
        double len = std::abs(step);
        if (len > 1.0) step *= 1.0 / len;
        z -= step;
        if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(z))) {
            HoloEval fin = f(z);
            if (std::abs(fin.value) <= opt.residual_tol * std::max(fin.scale, 1e-300)) {
                root = z;
                return true;
            }
            return false;
        }
    }
    HoloEval fin = f(z);
    if (std::abs(fin.value) <= opt.residual_tol * std::max(fin.scale, 1e-300)) {
        root = z;
        return true;
    }
    return false;
}

namespace detail {

inline void sort_and_dedup(std::vector<cplx>& roots, double radius) {
    std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
        if (a.imag() != b.imag()) return a.imag() < b.imag();
        return a.real() < b.real();
    });
    std::vector<cplx> out;
    out.reserve(roots.size());
    for (cplx r : roots) {
        bool dup = false;
        // Sorted by imaginary part: only a short tail can be within radius.
        for (auto it = out.rbegin(); it != out.rend() && r.imag() - it->imag() <= radius; ++it)
            if (std::abs(*it - r) <= radius) {
                dup = true;
                break;
            }
        if (!dup) out.push_back(r);
    }
    // Canonical output order: rightmost first, ties by imaginary part.
    std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() < b.imag();
    });
    roots = std::move(out);
}

}  // namespace detail

/// Roots of a holomorphic function in a rectangle: Newton from every cell
/// centre of an nx x ny grid plus any caller-provided seeds, keeping the
/// converged roots that land inside the window, deduplicated at radius 1e-8.
inline RootSet find_roots_quasipoly(const HoloFunction& f, const Window& window, int nx, int ny,
                                    std::span<const cplx> extra_seeds = {}, const NewtonOptions& opt = {}) {
    if (window.degenerate()) throw DomainError("find_roots_quasipoly: degenerate window");
    if (nx < 2 || ny < 2) throw DomainError("find_roots_quasipoly: grid must be at least 2 x 2");
    RootSet out;
    out.window = window;
    out.tolerance = opt.residual_tol;
    const double hx = (window.re_max - window.re_min) / nx;
    const double hy = (window.im_max - window.im_min) / ny;
    std::vector<cplx> found;
    auto try_seed = [&](cplx seed) {
        cplx r;
        if (newton_polish(f, seed, r, opt) && window.contains(r)) found.push_back(r);
    };
    for (int i = 0; i < nx; ++i)
        for (int k = 0; k < ny; ++k)
            try_seed(cplx(window.re_min + (i + 0.5) * hx, window.im_min + (k + 0.5) * hy));
    for (cplx s : extra_seeds) try_seed(s);
    detail::sort_and_dedup(found, opt.dedup_radius);
    out.roots = std::move(found);
    return out;
}

/// Seeds for the delay-induced roots of equations of the form
/// exp(-lambda*tau + i*phase) = Y(lambda): for each integer branch j the
/// fixed point lambda = (i*phase + 2*pi*i*j - Log Y(lambda)) / tau, iterated a
/// few times. `candidates` returns the admissible values of Y at lambda (one
/// for a linear dependence on the exponential, two for a quadratic).
inline std::vector<cplx> delay_branch_seeds(const std::function<std::vector<cplx>(cplx)>& candidates, double tau,
                                            double phase, double im_min, double im_max, int sweeps = 6) {
    std::vector<cplx> seeds;
    if (!(tau > 0.0)) return seeds;
    const double two_pi = 2.0 * std::numbers::pi;
    const int j_lo = static_cast<int>(std::floor((im_min * tau - phase) / two_pi)) - 1;
    const int j_hi = static_cast<int>(std::ceil((im_max * tau - phase) / two_pi)) + 1;
    const std::size_t families = candidates(cplx(0.0, 0.5 * (im_min + im_max))).size();
    for (std::size_t fam = 0; fam < families; ++fam) {
        for (int j = j_lo; j <= j_hi; ++j) {
            cplx lam(0.0, (phase + two_pi * j) / tau);
            bool ok = true;
            for (int s = 0; s < sweeps && ok; ++s) {
                std::vector<cplx> ys = candidates(lam);
                if (fam >= ys.size() || ys[fam] == cplx(0.0, 0.0) || !std::isfinite(std::abs(ys[fam]))) {
                    ok = false;
                    break;
                }
                cplx lg = std::log(ys[fam]);
                // Keep the branch whose imaginary part stays closest to the current iterate.
                cplx next = (cplx(0.0, phase + two_pi * j) - lg) / tau;
                double wind = std::round((lam.imag() - next.imag()) * tau / two_pi);
                lam = next + cplx(0.0, two_pi * wind / tau);
            }
            if (ok && std::isfinite(lam.real()) && std::isfinite(lam.imag())) seeds.push_back(lam);
        }
    }
    return seeds;
}

/// All real solutions of Kepler's equation Omega = beta + R sin(k_plus - Omega tau).
///
/// g(Omega) = Omega - beta - R sin(k_plus - Omega tau) oscillates with period
/// 2 pi / tau in Omega, so sampling at a step well below half that period and
/// bracketing sign changes finds every transversal root; extrema of g are
/// also examined to catch tangential (double) roots.
inline std::vector<double> solve_kepler(double beta, double R, double k_plus, double tau) {
    if (!std::isfinite(beta) || !std::isfinite(R) || !std::isfinite(k_plus) || !std::isfinite(tau))
        throw DomainError("solve_kepler: non-finite input");
    if (tau < 0.0) throw DomainError("solve_kepler: tau must be >= 0");
    if (R == 0.0) return {beta};
    if (tau == 0.0) return {beta + R * std::sin(k_plus)};

    auto g = [&](double om) { return om - beta - R * std::sin(k_plus - om * tau); };
    auto dg = [&](double om) { return 1.0 + R * tau * std::cos(k_plus - om * tau); };
    const double tol = 1e-12 * std::max(1.0, std::abs(beta) + std::abs(R));

    auto refine = [&](double lo, double hi) {
        double glo = g(lo);
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
            double mid = 0.5 * (lo + hi);
            double gm = g(mid);
            if ((gm < 0.0) == (glo < 0.0)) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        double x = 0.5 * (lo + hi);
        for (int it = 0; it < 3; ++it) {
            double d = dg(x);
            if (d == 0.0) break;
            double nx = x - g(x) / d;
            if (nx < lo || nx > hi) break;
            x = nx;
        }
        return x;
    };

    const double span = std::abs(R);
    const double delta = 1e-3 * std::max(1.0, span);
    const double lo = beta - span - delta;
    const double hi = beta + span + delta;
    const double step = std::min(std::numbers::pi / (4.0 * (1.0 + span * tau)), 1e-2);
    const long samples = static_cast<long>(std::ceil((hi - lo) / step));
    const double h = (hi - lo) / samples;

    std::vector<double> roots;
    double x_prev = lo;
    double g_prev = g(lo);
    for (long i = 1; i <= samples; ++i) {
        double x = lo + i * h;
        double gx = g(x);
        if (gx == 0.0) {
            roots.push_back(x);
        } else if (g_prev != 0.0 && (gx < 0.0) != (g_prev < 0.0)) {
            roots.push_back(refine(x_prev, x));
        }
        // Tangencies: an extremum of g with |g| tiny between samples.
        double d0 = dg(x_prev), d1 = dg(x);
        if ((d0 < 0.0) != (d1 < 0.0) && d0 != 0.0) {
            double a = x_prev, b = x;
            for (int it = 0; it < 200 && b - a > 1e-16 * std::max(1.0, std::abs(a)); ++it) {
                double m = 0.5 * (a + b);
                if ((dg(m) < 0.0) == (d0 < 0.0))
                    a = m;
                else
                    b = m;
            }
            double xe = 0.5 * (a + b);
            double ge = g(xe);
            if ((gx < 0.0) == (g_prev < 0.0) && g_prev != 0.0 && gx != 0.0) {
                if (std::abs(ge) <= tol) {
                    roots.push_back(xe);
                } else if ((ge < 0.0) != (gx < 0.0)) {
                    // Two close roots straddle the extremum inside one sample interval.
                    roots.push_back(refine(x_prev, xe));
                    roots.push_back(refine(xe, x));
                }
            }
        }
        x_prev = x;
        g_prev = gx;
    }
    std::sort(roots.begin(), roots.end());
    std::vector<double> out;
    for (double r : roots)
        if (out.empty() || r - out.back() > 1e-10) out.push_back(r);
    return out;
}

/// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, ascending. Eigenvalues of the
/// companion matrix, Newton-polished; roots closer than 1e-8 are merged.
inline std::vector<double> solve_cubic_real(double c3, double c2, double c1, double c0) {
    if (c3 == 0.0) throw DomainError("solve_cubic_real: leading coefficient is zero");
    Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
    companion(0, 0) = -c2 / c3;
    companion(0, 1) = -c1 / c3;
    companion(0, 2) = -c0 / c3;
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix3d> es(companion, false);
    const double cmax = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
    auto p = [&](double x) { return ((c3 * x + c2) * x + c1) * x + c0; };
    auto dp = [&](double x) { return (3.0 * c3 * x + 2.0 * c2) * x + c1; };

    std::vector<double> roots;
    for (int i = 0; i < 3; ++i) {
        cplx ev = es.eigenvalues()[i];
        // Double roots come back as a pair split by ~sqrt(machine eps).
        if (std::abs(ev.imag()) > 1e-6 * std::max(1.0, std::abs(ev.real()))) continue;
        double x = ev.real();
        for (int it = 0; it < 50; ++it) {
            double d = dp(x);
            if (d == 0.0) break;
            double nx = x - p(x) / d;
            if (std::abs(nx - x) <= 1e-16 * std::max(1.0, std::abs(x))) {
                x = nx;
                break;
            }
            if (std::abs(p(nx)) > std::abs(p(x))) break;
            x = nx;
        }
        if (std::abs(p(x)) <= 1e-10 * cmax) roots.push_back(x);
    }
    std::sort(roots.begin(), roots.end());
    std::vector<double> out;
    for (double r : roots) {
        if (!out.empty()) {
            const double gap = r - out.back();
            const double scale = std::max(1.0, std::abs(r));
            // A multiple root comes back split by ~sqrt(eps); p' vanishes between the copies.
            const double mid = 0.5 * (r + out.back());
            if (gap <= 1e-8 * scale || (gap <= 1e-5 * scale && std::abs(dp(mid)) <= 1e-6 * cmax)) {
                out.back() = mid;
                continue;
            }
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace dlattice
