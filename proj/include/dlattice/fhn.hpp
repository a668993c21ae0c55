#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "dlattice/core.hpp"
#include "dlattice/error.hpp"
#include "dlattice/roots.hpp"

namespace dlattice {

/// Synaptic opening rate alpha(v) = 1 / (2 (1 + e^{-5(v-1)})).
inline double fhn_rate(double v) { return 0.5 / (1.0 + std::exp(-5.0 * (v - 1.0))); }

/// d alpha / dv = 5 alpha (1 - 2 alpha).
inline double fhn_rate_prime(double v) {
    const double a = fhn_rate(v);
    return 5.0 * a * (1.0 - 2.0 * a);
}

/// Stationary gate value s(v) = alpha / (alpha + 0.6).
inline double fhn_gate(double v) {
    const double a = fhn_rate(v);
    return a / (a + 0.6);
}

inline double fhn_gate_prime(double v) {
    const double a = fhn_rate(v);
    return 0.6 * fhn_rate_prime(v) / ((a + 0.6) * (a + 0.6));
}

/// Right side of the scalar rest-state equation g(v) = 0.
inline double fhn_stst_residual(const FhnParams& p, double C, double v) {
    return v - v * v * v / 3.0 - (v + p.a) / p.b + p.current + C * (p.v_r - v) * fhn_gate(v);
}

/// dg/dv; does not depend on the current I.
inline double fhn_stst_slope(const FhnParams& p, double C, double v) {
    return 1.0 - v * v - 1.0 / p.b + C * (-fhn_gate(v) + (p.v_r - v) * fhn_gate_prime(v));
}

/// Current I for which v is a rest state.
inline double fhn_current_for(const FhnParams& p, double C, double v) {
    FhnParams q = p;
    q.current = 0.0;
    return -fhn_stst_residual(q, C, v);
}

struct FhnSteadyState {
    double v = 0.0;
    double w = 0.0;
    double s = 0.0;
};

inline FhnSteadyState fhn_state_at(const FhnParams& p, double v) { return FhnSteadyState{v, (v + p.a) / p.b, fhn_gate(v)}; }

/// All homogeneous rest states with v in [v_lo, v_hi], ascending in v:
/// sign changes on a grid of spacing `step`, refined by bisection.
inline std::vector<FhnSteadyState> fhn_steady_states(const FhnParams& p, double C, double v_lo = -5.0,
                                                     double v_hi = 5.0, double step = 1e-3) {
    if (!(v_hi > v_lo) || !(step > 0.0)) throw DomainError("fhn_steady_states: bad search interval");
    auto g = [&](double v) { return fhn_stst_residual(p, C, v); };
    std::vector<FhnSteadyState> out;
    const long n = static_cast<long>(std::ceil((v_hi - v_lo) / step));
    const double h = (v_hi - v_lo) / n;
    double x0 = v_lo, g0 = g(v_lo);
    for (long i = 1; i <= n; ++i) {
        double x1 = v_lo + i * h, g1 = g(x1);
        if (g0 == 0.0) {
            out.push_back(fhn_state_at(p, x0));
        } else if ((g0 < 0.0) != (g1 < 0.0) && g1 != 0.0) {
            double a = x0, b = x1, ga = g0;
            for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
                double m = 0.5 * (a + b), gm = g(m);
                if ((gm < 0.0) == (ga < 0.0)) {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            out.push_back(fhn_state_at(p, 0.5 * (a + b)));
        }
        x0 = x1;
        g0 = g1;
    }
    if (g0 == 0.0) out.push_back(fhn_state_at(p, x0));
    return out;
}

namespace detail {

// Maximum of g'(v) over v in [lo, hi]: dense scan then golden-section refinement.
inline std::pair<double, double> fhn_max_slope(const FhnParams& p, double C, double lo = -5.0, double hi = 5.0) {
    const int n = 4000;
    double best_v = lo, best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        double v = lo + (hi - lo) * i / n, s = fhn_stst_slope(p, C, v);
        if (s > best) {
            best = s;
            best_v = v;
        }
    }
    double a = std::max(lo, best_v - (hi - lo) / n), b = std::min(hi, best_v + (hi - lo) / n);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a), d = a + r * (b - a);
    for (int it = 0; it < 100; ++it) {
        if (fhn_stst_slope(p, C, c) > fhn_stst_slope(p, C, d))
            b = d;
        else
            a = c;
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    double v = 0.5 * (a + b);
    return {v, fhn_stst_slope(p, C, v)};
}

}  // namespace detail

/// Interval of currents with three coexisting rest states, if any.
inline std::optional<std::pair<double, double>> fhn_fold_interval(const FhnParams& p, double C) {
    // Folds are the zeros of g'(v); the matching currents bound the interval.
    const int n = 10000;
    std::vector<double> currents;
    double v0 = -5.0, s0 = fhn_stst_slope(p, C, v0);
    for (int i = 1; i <= n; ++i) {
        double v1 = -5.0 + 10.0 * i / n, s1 = fhn_stst_slope(p, C, v1);
        if ((s0 < 0.0) != (s1 < 0.0)) {
            double a = v0, b = v1;
            for (int it = 0; it < 100; ++it) {
                double m = 0.5 * (a + b);
                if ((fhn_stst_slope(p, C, m) < 0.0) == (s0 < 0.0))
                    a = m;
                else
                    b = m;
            }
            currents.push_back(fhn_current_for(p, C, 0.5 * (a + b)));
        }
        v0 = v1;
        s0 = s1;
    }
    if (currents.size() < 2) return std::nullopt;
    auto [lo, hi] = std::minmax_element(currents.begin(), currents.end());
    return std::make_pair(*lo, *hi);
}

/// Smallest coupling at which the rest-state equation acquires a double root.
///
/// g is linear in I, so a double root (g = g' = 0) exists for some I exactly
/// when max_v g'(v) >= 0; the threshold is found by bisection on C.
inline double fhn_saddle_node_C(const FhnParams& p = {}, double c_hi = 10.0) {
    auto has_fold = [&](double C) { return detail::fhn_max_slope(p, C).second >= 0.0; };
    double lo = 0.0, hi = c_hi;
    if (has_fold(lo)) throw NumericalError("fhn_saddle_node_C: uncoupled node already has a fold");
    if (!has_fold(hi)) throw NumericalError("fhn_saddle_node_C: no fold for C in [0, " + std::to_string(c_hi) + "]");
    while (hi - lo > 1e-12) {
        double mid = 0.5 * (lo + hi);
        (has_fold(mid) ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Instantaneous and delayed Jacobians at a rest state. B has the single
/// nonzero entry b13 = (C/2)(v_r - v).
struct LinearizationPair {
    Eigen::Matrix3d A;
    Eigen::Matrix3d B;

    double b13() const { return B(0, 2); }
};

inline LinearizationPair fhn_linearize(const FhnSteadyState& st, const FhnParams& p, double C) {
    const double al = fhn_rate(st.v);
    LinearizationPair lp;
    lp.A.setZero();
    lp.A(0, 0) = 1.0 - st.v * st.v - C * st.s;
    lp.A(0, 1) = -1.0;
    lp.A(1, 0) = p.eps;
    lp.A(1, 1) = -p.b * p.eps;
    lp.A(2, 0) = 5.0 * al * (1.0 - 2.0 * al) * (1.0 - st.s);
    lp.A(2, 2) = -al - 0.6;
    lp.B.setZero();
    lp.B(0, 2) = 0.5 * C * (p.v_r - st.v);
    return lp;
}

/// det(-lambda Id + A + 2 B cos(k-) e^{i k+} e^{-lambda tau}). B has rank one,
/// so the determinant is the cubic det(A - lambda Id) minus one exponential term.
inline HoloFunction fhn_characteristic(const LinearizationPair& lp, double tau, const WaveVector& wv) {
    const Eigen::Matrix3d A = lp.A;
    const cplx g0 = 2.0 * lp.b13() * coupling_cos(wv) * std::exp(cplx(0.0, wv.kplus()));
    return [=](cplx lam) {
        const cplx d11 = A(0, 0) - lam, d22 = A(1, 1) - lam, d33 = A(2, 2) - lam;
        const cplx q = d11 * d22 - A(0, 1) * A(1, 0);
        const cplx poly = d33 * q;
        const cplx dpoly = -q + d33 * (-d22 - d11);
        const cplx e = g0 * std::exp(-lam * tau);
        const cplx cof = A(2, 0) * d22;
        HoloEval out;
        out.value = poly - e * cof;
        out.derivative = dpoly + tau * e * cof + e * A(2, 0);
        out.scale = std::abs(d33) * (std::abs(d11) * std::abs(d22) + std::abs(A(0, 1) * A(1, 0))) +
                    std::abs(e) * std::abs(cof);
        return out;
    };
}

/// Characteristic roots of one mode inside a window.
inline RootSet fhn_char_roots(const LinearizationPair& lp, double tau, const WaveVector& wv, const Window& window,
                              int nx = 40, int ny = 40) {
    if (tau < 0.0) throw DomainError("fhn_char_roots: tau must be >= 0");
    auto f = fhn_characteristic(lp, tau, wv);
    const cplx g0 = 2.0 * lp.b13() * coupling_cos(wv) * std::exp(cplx(0.0, wv.kplus()));
    std::vector<cplx> seeds;
    Eigen::EigenSolver<Eigen::Matrix3d> es(lp.A, false);
    for (int i = 0; i < 3; ++i) seeds.push_back(es.eigenvalues()[i]);
    if (std::abs(g0) > 0.0 && lp.A(2, 0) != 0.0 && tau > 0.0) {
        const Eigen::Matrix3d A = lp.A;
        auto candidates = [&](cplx lam) {
            const cplx d11 = A(0, 0) - lam, d22 = A(1, 1) - lam, d33 = A(2, 2) - lam;
            const cplx den = g0 * A(2, 0) * d22;
            std::vector<cplx> ys;
            if (den != cplx(0.0, 0.0)) ys.push_back(d33 * (d11 * d22 - A(0, 1) * A(1, 0)) / den);
            return ys;
        };
        auto extra = delay_branch_seeds(candidates, tau, 0.0, window.im_min, window.im_max);
        seeds.insert(seeds.end(), extra.begin(), extra.end());
    }
    return find_roots_quasipoly(f, window, nx, ny, seeds);
}

struct FhnStrongSpectrum {
    double lambda0 = 0.0;  // a33, always <= -0.6
    cplx lambda_plus;
    cplx lambda_minus;
    bool unstable = false;  // a11 > b eps: Re lambda_+ > 0
    bool complex_pair = false;  // a11 < 2 sqrt(eps) - b eps (with the matching lower bound)
};

inline FhnStrongSpectrum fhn_strong_spectrum(const LinearizationPair& lp, const FhnParams& p) {
    const double a11 = lp.A(0, 0), be = p.b * p.eps;
    const double disc = (a11 + be) * (a11 + be) - 4.0 * p.eps;
    const cplx root = std::sqrt(cplx(disc, 0.0));
    FhnStrongSpectrum out;
    out.lambda0 = lp.A(2, 2);
    out.lambda_plus = 0.5 * (a11 - be + root);
    out.lambda_minus = 0.5 * (a11 - be - root);
    out.unstable = std::max(out.lambda_plus.real(), out.lambda_minus.real()) > 0.0;
    out.complex_pair = disc < 0.0;
    return out;
}

/// Large-delay growth rate gamma(Omega, k-) = -log|Y| of the rest state,
/// Y = (a33 - i Omega) / (2 a31 b13 cos k-) (a11 - i Omega - a12 a21 / (a22 - i Omega)).
/// A decoupled mode (cos k- = 0) yields -infinity.
inline double fhn_hybrid_dispersion(const LinearizationPair& lp, double omega, double kminus) {
    const double ck = std::cos(kminus);
    const double den = 2.0 * lp.A(2, 0) * lp.b13() * ck;
    if (std::abs(ck) <= 1e-12) return -std::numeric_limits<double>::infinity();
    if (den == 0.0) throw DomainError("fhn_hybrid_dispersion: a31 b13 = 0, no delayed feedback");
    const cplx iw(0.0, omega);
    const cplx y = (lp.A(2, 2) - iw) / den * (lp.A(0, 0) - iw - lp.A(0, 1) * lp.A(1, 0) / (lp.A(1, 1) - iw));
    return -std::log(std::abs(y));
}

struct HopfPoint {
    double current = 0.0;  // I
    double omega = 0.0;
    double v = 0.0;  // rest potential at the bifurcation
};

struct HopfSearch {
    double v_min = -2.5, v_max = 2.5;
    double omega_max = 3.0;
    int nv = 50, nomega = 50;
    double residual_tol = 1e-10;
};

/// Hopf points of one mode: pairs (I, Omega) where lambda = i Omega solves
/// the characteristic equation. Newton in (v, Omega) from a seed grid; the
/// current follows from the rest-state equation. Sorted by I.
inline std::vector<HopfPoint> fhn_hopf_points(const FhnParams& p, double C, double tau, const WaveVector& wv,
                                              double i_min, double i_max, const HopfSearch& opt = {}) {
    auto eval = [&](double v, double om) {
        auto lp = fhn_linearize(fhn_state_at(p, v), p, C);
        return fhn_characteristic(lp, tau, wv)(cplx(0.0, om));
    };
    std::vector<HopfPoint> found;
    for (int i = 0; i < opt.nv; ++i) {
        for (int k = 0; k < opt.nomega; ++k) {
            double v = opt.v_min + (opt.v_max - opt.v_min) * (i + 0.5) / opt.nv;
            double om = opt.omega_max * (k + 0.5) / opt.nomega;
            bool ok = false;
            for (int it = 0; it < 60; ++it) {
                HoloEval e = eval(v, om);
                if (!std::isfinite(std::abs(e.value))) break;
                if (std::abs(e.value) <= opt.residual_tol * std::max(e.scale, 1e-300)) {
                    ok = true;
                    break;
                }
                // d/dOmega = i f'(lambda); d/dv by central difference.
                const double h = 1e-7 * std::max(1.0, std::abs(v));
                cplx fv = (eval(v + h, om).value - eval(v - h, om).value) / (2.0 * h);
                cplx fo = cplx(0.0, 1.0) * e.derivative;
                double j11 = fv.real(), j12 = fo.real(), j21 = fv.imag(), j22 = fo.imag();
                double det = j11 * j22 - j12 * j21;
                if (det == 0.0 || !std::isfinite(det)) break;
                double dv = (e.value.real() * j22 - j12 * e.value.imag()) / det;
                double dom = (j11 * e.value.imag() - j21 * e.value.real()) / det;
                double len = std::hypot(dv, dom);
                if (len > 0.5) {
                    dv *= 0.5 / len;
                    dom *= 0.5 / len;
                }
                v -= dv;
                om -= dom;
                if (std::abs(v) > 10.0) break;
            }
            // Omega -> 0 are folds of the rest state, not Hopf points.
            if (!ok || !(om > 1e-6)) continue;
            double cur = fhn_current_for(p, C, v);
            if (cur < i_min || cur > i_max) continue;
            bool dup = false;
            for (const auto& h : found)
                if (std::abs(h.v - v) < 1e-7 && std::abs(h.omega - om) < 1e-7) dup = true;
            if (!dup) found.push_back(HopfPoint{cur, om, v});
        }
    }
    std::sort(found.begin(), found.end(), [](const HopfPoint& a, const HopfPoint& b) {
        return a.current != b.current ? a.current < b.current : a.omega < b.omega;
    });
    return found;
}

}  // namespace dlattice
