#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Core>

#include "dlattice/core.hpp"
#include "dlattice/error.hpp"
#include "dlattice/lambertw.hpp"
#include "dlattice/roots.hpp"

namespace dlattice {

// ---------------------------------------------------------------------------
// Homogeneous steady state z = 0

/// Characteristic function of one lattice mode at the steady state:
/// -lambda + alpha + i beta + C cos(k-) e^{i k+} e^{-lambda tau}.
inline HoloFunction sl_stst_characteristic(const SlParams& p, double C, double tau, const WaveVector& wv) {
    const cplx mu(p.alpha, p.beta);
    const cplx g = C * coupling_cos(wv) * std::exp(cplx(0.0, wv.kplus()));
    return [=](cplx lam) {
        cplx e = g * std::exp(-lam * tau);
        return HoloEval{-lam + mu + e, -1.0 - tau * e, std::abs(lam) + std::abs(mu) + std::abs(e)};
    };
}

/// Steady-state eigenvalues of one mode from the Lambert W branches
/// j_min..j_max: lambda_j = alpha + i beta + W_j(tau C cos(k-) e^{i k+ - (alpha + i beta) tau}) / tau.
/// A decoupled mode (C cos k- = 0) has the single eigenvalue alpha + i beta.
inline RootSet sl_stst_eigenvalues(const SlParams& p, double C, double tau, const WaveVector& wv, int j_min,
                                   int j_max) {
    if (!(tau > 0.0)) throw DomainError("sl_stst_eigenvalues: tau must be > 0");
    if (j_min > j_max) throw DomainError("sl_stst_eigenvalues: empty branch range");
    const cplx mu(p.alpha, p.beta);
    const double gain = tau * C * coupling_cos(wv);
    RootSet out;
    out.tolerance = 1e-10;
    if (gain == 0.0) {
        out.roots.push_back(mu);
    } else {
        // log of the Lambert argument, kept in log form: |z| overflows for alpha tau << 0.
        cplx log_z = std::log(cplx(gain, 0.0)) + cplx(0.0, wv.kplus()) - mu * tau;
        for (int j = j_min; j <= j_max; ++j) out.roots.push_back(mu + lambert_w_from_log(j, log_z) / tau);
    }
    out.window = Window{out.roots.front().real(), out.roots.front().real(), out.roots.front().imag(),
                        out.roots.front().imag()};
    for (cplx r : out.roots) {
        out.window.re_min = std::min(out.window.re_min, r.real());
        out.window.re_max = std::max(out.window.re_max, r.real());
        out.window.im_min = std::min(out.window.im_min, r.imag());
        out.window.im_max = std::max(out.window.im_max, r.imag());
    }
    return out;
}

/// Rightmost steady-state eigenvalue of a mode (principal Lambert branch; at
/// tau = 0 the instantaneous eigenvalue alpha + i beta + C cos k- e^{i k+}).
inline cplx sl_stst_rightmost(const SlParams& p, double C, double tau, const WaveVector& wv) {
    if (tau < 0.0) throw DomainError("tau must be >= 0");
    if (tau == 0.0) return cplx(p.alpha, p.beta) + C * coupling_cos(wv) * std::exp(cplx(0.0, wv.kplus()));
    return sl_stst_eigenvalues(p, C, tau, wv, 0, 0).roots.front();
}

/// Large-delay growth curve of the steady state,
/// gamma(Omega) = -1/2 log[(alpha^2 + (beta - Omega)^2) / (C^2 cos^2 k-)].
/// A decoupled mode (C cos k- = 0) has no pseudo-continuous spectrum; the
/// result is then -infinity.
inline double sl_stst_pcs(const SlParams& p, double C, double kminus, double omega) {
    const double r = C * std::cos(kminus);
    if (std::abs(r) <= 1e-12 * C) return -std::numeric_limits<double>::infinity();
    const double num = p.alpha * p.alpha + (p.beta - omega) * (p.beta - omega);
    return -0.5 * std::log(num / (r * r));
}

/// alpha at which the rightmost steady-state eigenvalue over all modes of a
/// rows x cols torus crosses the imaginary axis; bisection to 1e-6.
inline double sl_hopf_threshold(double beta, double C, double tau, int rows, int cols) {
    if (tau < 0.0) throw DomainError("sl_hopf_threshold: tau must be >= 0");
    const auto modes = enumerate_modes(rows, cols);
    auto growth = [&](double alpha) {
        double g = -std::numeric_limits<double>::infinity();
        for (const auto& wv : modes) g = std::max(g, sl_stst_rightmost(SlParams{alpha, beta}, C, tau, wv).real());
        return g;
    };
    // For alpha < -C every root has |lambda - alpha - i beta| <= C e^{-tau Re lambda},
    // which rules out Re lambda >= 0.
    double lo = -C - 1.0;
    double hi = C + 1.0;
    int expand = 0;
    while (growth(hi) <= 0.0) {
        hi = 2.0 * hi + 1.0;
        if (++expand > 40) {
            std::ostringstream os;
            os << "sl_hopf_threshold: no sign change of the maximal real part for alpha in [" << lo << ", " << hi
               << "]";
            throw NumericalError(os.str());
        }
    }
    if (growth(lo) > 0.0) {
        std::ostringstream os;
        os << "sl_hopf_threshold: steady state unstable at alpha = " << lo;
        throw NumericalError(os.str());
    }
    while (hi - lo > 1e-6) {
        double mid = 0.5 * (lo + hi);
        if (growth(mid) > 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Plane waves z_mn = a e^{i(Omega t - k1 m - k2 n)}

struct PlaneWave {
    double a = 0.0;
    double omega = 0.0;
    WaveVector wv;
    double k_tau = 0.0;  // k+ - Omega tau
    double R = 0.0;      // C cos k-

    double a2() const { return a * a; }
};

/// Frequency branch of a mode before the amplitude condition is applied.
struct WaveBranch {
    WaveVector wv;
    double omega = 0.0;
    double k_tau = 0.0;
    double R = 0.0;
    double a2 = 0.0;  // alpha + R cos k_tau, may be negative
};

/// All Kepler solutions of every torus mode, sorted by mode then Omega.
/// Their number counts the Hopf bifurcations of the steady state.
inline std::vector<WaveBranch> sl_wave_branches(const SlParams& p, double C, double tau, int rows, int cols) {
    if (tau < 0.0) throw DomainError("tau must be >= 0");
    std::vector<WaveBranch> out;
    for (const auto& wv : enumerate_modes(rows, cols)) {
        const double R = C * coupling_cos(wv);
        for (double om : solve_kepler(p.beta, R, wv.kplus(), tau)) {
            const double kt = wv.kplus() - om * tau;
            out.push_back(WaveBranch{wv, om, kt, R, p.alpha + R * std::cos(kt)});
        }
    }
    return out;
}

/// Plane waves of positive amplitude for every mode of the torus.
inline std::vector<PlaneWave> sl_enumerate_plane_waves(const SlParams& p, double C, double tau, int rows, int cols) {
    std::vector<PlaneWave> out;
    for (const auto& b : sl_wave_branches(p, C, tau, rows, cols))
        if (b.a2 > 0.0) out.push_back(PlaneWave{std::sqrt(b.a2), b.omega, b.wv, b.k_tau, b.R});
    return out;
}

/// Builds a wave from its mode and frequency (a^2 = alpha + R cos k_tau).
inline PlaneWave sl_make_wave(const SlParams& p, double C, double tau, const WaveVector& wv, double omega) {
    PlaneWave w;
    w.wv = wv;
    w.omega = omega;
    w.R = C * coupling_cos(wv);
    w.k_tau = wv.kplus() - omega * tau;
    double a2 = p.alpha + w.R * std::cos(w.k_tau);
    if (a2 < 0.0) throw DomainError("sl_make_wave: negative squared amplitude");
    w.a = std::sqrt(a2);
    return w;
}

// ---------------------------------------------------------------------------
// Floquet spectrum of a plane wave

namespace detail {

struct ChiParts {
    cplx p2, dp2;  // lambda^2 + 2(a^2 + R cos k_tau) lambda + R^2 + 2 R a^2 cos k_tau, and d/dlambda
    cplx p1, dp1;  // bracket multiplying e^{-lambda tau + i q+}, and d/dlambda
    double s = 0.0;  // R+ R-
    double scale_p2 = 0.0;
    double scale_p1 = 0.0;
};

inline ChiParts chi_parts(const PlaneWave& w, cplx lam, double qminus, double C) {
    const double a2 = w.a2();
    const double ct = std::cos(w.k_tau), st = std::sin(w.k_tau);
    const double rp = C * snapped_cos(w.wv.kminus() + qminus);
    const double rm = C * snapped_cos(w.wv.kminus() - qminus);
    const cplx ek(ct, st);
    const cplx sum = rp * ek + rm * std::conj(ek);
    const cplx diff = rp * ek - rm * std::conj(ek);
    const double c1 = a2 + w.R * ct;
    ChiParts out;
    out.p2 = lam * lam + 2.0 * c1 * lam + w.R * w.R + 2.0 * w.R * a2 * ct;
    out.dp2 = 2.0 * lam + 2.0 * c1;
    out.p1 = (c1 + lam) * sum - cplx(0.0, w.R * st) * diff;
    out.dp1 = sum;
    out.s = rp * rm;
    const double al = std::abs(lam);
    out.scale_p2 = al * al + 2.0 * std::abs(c1) * al + w.R * w.R + 2.0 * std::abs(w.R * a2 * ct);
    out.scale_p1 = (std::abs(c1) + al + std::abs(w.R * st)) * (std::abs(rp) + std::abs(rm));
    return out;
}

}  // namespace detail

/// Floquet characteristic function chi(lambda, q-, q+) of a plane wave,
/// with R+- = C cos(k- +- q-).
inline cplx sl_floquet_chi(const PlaneWave& w, cplx lam, double qplus, double qminus, double C, double tau) {
    auto c = detail::chi_parts(w, lam, qminus, C);
    const cplx e = std::exp(-lam * tau + cplx(0.0, qplus));
    return c.p2 - c.p1 * e + c.s * e * e;
}

/// chi with derivative and term-magnitude scale, for root finding.
inline HoloFunction sl_floquet_characteristic(const PlaneWave& w, double qplus, double qminus, double C,
                                              double tau) {
    return [=](cplx lam) {
        auto c = detail::chi_parts(w, lam, qminus, C);
        const cplx e = std::exp(-lam * tau + cplx(0.0, qplus));
        const cplx e2 = e * e;
        HoloEval out;
        out.value = c.p2 - c.p1 * e + c.s * e2;
        out.derivative = c.dp2 - (c.dp1 - tau * c.p1) * e - 2.0 * tau * c.s * e2;
        out.scale = c.scale_p2 + c.scale_p1 * std::abs(e) + std::abs(c.s) * std::abs(e2);
        return out;
    };
}

struct StrongSpectrum {
    cplx lambda_plus;
    cplx lambda_minus;
    double a_s = 0.0;  // waves with a < a_s carry a strong unstable eigenvalue

    double max_real() const { return std::max(lambda_plus.real(), lambda_minus.real()); }
    bool unstable() const { return max_real() > 0.0; }
};

/// Squared threshold amplitude a_S^2 below which a strong unstable eigenvalue exists.
inline double sl_strong_threshold_a2(double alpha, double R) {
    const double r = std::abs(R);
    if (alpha <= std::numbers::sqrt2 * r) return alpha / 2.0;
    return 0.5 * (alpha + std::sqrt(alpha * alpha - 2.0 * R * R));
}

/// Delay-independent eigenvalues of a plane wave (the limit e^{-lambda tau} -> 0).
inline StrongSpectrum sl_strong_spectrum(const PlaneWave& w, double alpha) {
    const double a2 = w.a2();
    const cplx disc = std::sqrt(cplx(a2 * a2 + (a2 - alpha) * (a2 - alpha) - w.R * w.R, 0.0));
    StrongSpectrum out;
    out.lambda_plus = alpha - 2.0 * a2 + disc;
    out.lambda_minus = alpha - 2.0 * a2 - disc;
    out.a_s = std::sqrt(std::max(0.0, sl_strong_threshold_a2(alpha, w.R)));
    return out;
}

/// Large-delay multipliers Y+- = (A + iB +- sqrt(zeta)) / S at (omega, q-).
struct PcsMultipliers {
    cplx y_plus;
    cplx y_minus;
    bool degenerate = false;  // S(q-) = 0: single finite root stored in y_plus, y_minus infinite
};

inline PcsMultipliers sl_floquet_multipliers(const PlaneWave& w, double C, double omega, double qminus) {
    const double a2 = w.a2();
    const double km = w.wv.kminus();
    const double ct = std::cos(w.k_tau), st = std::sin(w.k_tau);
    const double ckm = std::cos(km), skm = std::sin(km);
    const double cq = std::cos(qminus), sq = std::sin(qminus);
    const double S = C * C * snapped_cos(km + qminus) * snapped_cos(km - qminus);
    const double A = C * ((w.R + a2 * ct) * ckm * cq + omega * st * skm * sq);
    const double B = C * (-a2 * st * skm * sq + omega * ct * ckm * cq);
    const double D = w.R * w.R - omega * omega + 2.0 * w.R * a2 * ct;
    const double E = 2.0 * omega * (a2 + w.R * ct);
    PcsMultipliers out;
    const cplx ab(A, B);
    if (S == 0.0) {
        out.degenerate = true;
        out.y_plus = cplx(D, E) / (2.0 * ab);
        out.y_minus = cplx(std::numeric_limits<double>::infinity(), 0.0);
        return out;
    }
    const cplx zeta(A * A - B * B - S * D, 2.0 * A * B - S * E);
    const cplx root = std::sqrt(zeta);
    out.y_plus = (ab + root) / S;
    out.y_minus = (ab - root) / S;
    return out;
}

struct PcsValue {
    double gamma_plus = 0.0;
    double gamma_minus = 0.0;
};

/// Pseudo-continuous growth rates gamma+- = -log|Y+-| of a plane wave.
inline PcsValue sl_floquet_pcs(const PlaneWave& w, double C, double omega, double qminus) {
    auto y = sl_floquet_multipliers(w, C, omega, qminus);
    return PcsValue{-std::log(std::abs(y.y_plus)), -std::log(std::abs(y.y_minus))};
}

/// Real roots a^2 of the neutral (Eckhaus) stability cubic of waves with given k-.
inline std::vector<double> sl_neutral_amplitude(double alpha, double C, double kminus) {
    const double R = C * std::cos(kminus);
    const double s2 = std::sin(kminus) * std::sin(kminus);
    const double c2 = -2.5 * alpha;
    const double c1 = 2.0 * alpha * alpha - 0.5 * R * R * (1.0 + 2.0 * s2);
    const double c0 = -0.5 * alpha * alpha * alpha + 0.5 * R * R * alpha * (1.0 + s2);
    return solve_cubic_real(1.0, c2, c1, c0);
}

/// Minimal alpha for which a wave with (k-, k_tau) can be stable.
inline double sl_alpha0(double kminus, double k_tau, double C) {
    const double ck = std::cos(kminus), st = std::sin(k_tau);
    const double den = ck * ck - st * st;
    if (std::abs(den) <= 1e-12) throw DomainError("sl_alpha0: pole at cos^2 k- = sin^2 k_tau");
    const double R = C * ck;
    return R * std::cos(k_tau) * (1.0 - 2.0 * den) / den;
}

/// Hessian of gamma- at the trivial multiplier (omega, q-) = (0, 0). Defined
/// in the wedge cos k_tau > 0, cos k- > 0.
inline Eigen::Matrix2d sl_hessian_at_trivial(const PlaneWave& w) {
    const double ct = std::cos(w.k_tau), st = std::sin(w.k_tau);
    if (!(ct > 0.0)) throw DomainError("sl_hessian_at_trivial: cos k_tau <= 0 (uniform instability regime)");
    if (!(std::cos(w.wv.kminus()) > 0.0)) throw DomainError("sl_hessian_at_trivial: |k-| >= pi/2 is outside the analysed wedge");
    if (!(w.a > 0.0)) throw DomainError("sl_hessian_at_trivial: zero amplitude");
    const double a2 = w.a2(), R = w.R;
    const double tk = std::tan(w.wv.kminus()), tt = st / ct;
    Eigen::Matrix2d h;
    h(0, 0) = (R / a2 * st * st / ct - 1.0) / (R * R * ct * ct);
    h(1, 1) = -1.0 + R * tk * tk / (a2 * ct * ct * ct) + tk * tk * tt * tt;
    h(0, 1) = h(1, 0) = tk * tt / (a2 * ct * ct);
    return h;
}

inline bool negative_definite(const Eigen::Matrix2d& h) {
    return h(0, 0) < 0.0 && h.determinant() > 0.0;
}

/// Left side of the modulational stability condition; positive means the
/// spectrum is locally concave at the trivial multiplier.
inline double sl_modulational_margin(const PlaneWave& w) {
    const double ct = std::cos(w.k_tau), sk = std::sin(w.wv.kminus());
    return (ct * ct - sk * sk) * (w.R * ct + w.a2()) - w.R * ct;
}

// ---------------------------------------------------------------------------
// Exact Floquet scan

enum class StabilityClass { Stable, StrongUnstable, UniformUnstable, ModulationalUnstable };

inline const char* to_string(StabilityClass c) {
    switch (c) {
        case StabilityClass::Stable: return "stable";
        case StabilityClass::StrongUnstable: return "strong";
        case StabilityClass::UniformUnstable: return "uniform";
        case StabilityClass::ModulationalUnstable: return "modulational";
    }
    return "?";
}

struct Witness {
    double omega = 0.0;  // Im lambda of the most unstable exponent
    double qminus = 0.0;
    double qplus = 0.0;
    cplx lambda;
};

struct StabilityVerdict {
    StabilityClass cls = StabilityClass::Stable;
    double max_growth = -std::numeric_limits<double>::infinity();
    Witness witness;
};

/// Perturbation wavevectors (q+, q-) at which the Floquet spectrum is scanned.
struct QGrid {
    std::vector<std::pair<double, double>> points;  // (q+, q-)

    /// The q-values admissible on a rows x cols torus.
    static QGrid lattice(int rows, int cols) {
        QGrid g;
        for (const auto& q : enumerate_modes(rows, cols)) g.points.emplace_back(q.kplus(), q.kminus());
        return g;
    }
    /// Uniform sampling of q- in (-pi, pi] and q+ in (0, 2 pi] for an infinite lattice.
    static QGrid continuous(int n_minus = 256, int n_plus = 256) {
        if (n_minus < 1 || n_plus < 1) throw DomainError("QGrid::continuous: sample counts must be positive");
        QGrid g;
        for (int i = 1; i <= n_plus; ++i)
            for (int j = 1; j <= n_minus; ++j)
                g.points.emplace_back(kTwoPi * i / n_plus, -std::numbers::pi + kTwoPi * j / n_minus);
        return g;
    }
};

struct FloquetOptions {
    int nx = 40;
    int ny = 40;
    double im_half_width = -1.0;  // < 0: 3|beta| + 3 + |alpha| + |C|
    double trivial_radius = 1e-6;
    double stable_tol = 1e-9;  // max growth at or below this counts as stable
};

/// Exponents found for one perturbation wavevector.
struct FloquetRoots {
    double qplus = 0.0;
    double qminus = 0.0;
    std::vector<cplx> roots;
    std::vector<bool> strong;  // root lies next to an unstable strong eigenvalue
};

inline bool is_trivial_q(double qplus, double qminus) {
    // (q1, q2) = (q+ + q-, q+ - q-) must both vanish mod 2 pi.
    return same_angle(qplus + qminus, 0.0, 1e-12) && same_angle(qplus - qminus, 0.0, 1e-12);
}

inline Window sl_floquet_window(const SlParams& p, double C, const FloquetOptions& opt) {
    const double h = opt.im_half_width > 0.0 ? opt.im_half_width
                                             : 3.0 * std::abs(p.beta) + 3.0 + std::abs(p.alpha) + std::abs(C);
    return Window{-2.0, std::max(1.0, 2.0 * p.alpha), -h, h};
}

/// Roots of chi for one (q+, q-) in the scan window: grid seeds plus one seed
/// per branch of each delay family and the strong eigenvalues.
inline FloquetRoots sl_floquet_roots(const PlaneWave& w, const SlParams& p, double C, double tau, double qplus,
                                     double qminus, const FloquetOptions& opt = {}) {
    const Window win = sl_floquet_window(p, C, opt);
    auto f = sl_floquet_characteristic(w, qplus, qminus, C, tau);
    auto candidates = [&](cplx lam) {
        auto c = detail::chi_parts(w, lam, qminus, C);
        std::vector<cplx> ys;
        if (c.s == 0.0) {
            if (c.p1 != cplx(0.0, 0.0)) ys.push_back(c.p2 / c.p1);
            return ys;
        }
        cplx disc = std::sqrt(c.p1 * c.p1 - 4.0 * c.s * c.p2);
        ys.push_back((c.p1 + disc) / (2.0 * c.s));
        ys.push_back((c.p1 - disc) / (2.0 * c.s));
        return ys;
    };
    std::vector<cplx> seeds = delay_branch_seeds(candidates, tau, qplus, win.im_min, win.im_max);
    const auto strong = sl_strong_spectrum(w, p.alpha);
    seeds.push_back(strong.lambda_plus);
    seeds.push_back(strong.lambda_minus);
    RootSet rs = find_roots_quasipoly(f, win, opt.nx, opt.ny, seeds);

    FloquetRoots out;
    out.qplus = qplus;
    out.qminus = qminus;
    const bool trivial_q = is_trivial_q(qplus, qminus);
    for (cplx r : rs.roots) {
        if (trivial_q && std::abs(r) <= opt.trivial_radius) continue;
        bool near_strong = false;
        for (cplx mu : {strong.lambda_plus, strong.lambda_minus})
            if (mu.real() > 0.0 && std::abs(r - mu) < 0.5 * mu.real()) near_strong = true;
        out.roots.push_back(r);
        out.strong.push_back(near_strong);
    }
    return out;
}

/// Classifies a wave from its maximal exact Floquet growth rate.
inline StabilityClass sl_classify(const PlaneWave& w, double alpha, double max_growth, double stable_tol = 1e-9) {
    if (max_growth <= stable_tol) return StabilityClass::Stable;
    if (sl_strong_spectrum(w, alpha).unstable()) return StabilityClass::StrongUnstable;
    if (std::cos(w.k_tau) < 0.0) return StabilityClass::UniformUnstable;
    return StabilityClass::ModulationalUnstable;
}

/// Stability of a plane wave from the exact characteristic roots over a q-grid.
inline StabilityVerdict sl_floquet_exact(const PlaneWave& w, const SlParams& p, double C, double tau,
                                         const QGrid& grid, const FloquetOptions& opt = {},
                                         std::vector<FloquetRoots>* spectrum = nullptr) {
    if (!(tau > 0.0)) throw DomainError("sl_floquet_exact: tau must be > 0");
    StabilityVerdict v;
    for (const auto& [qp, qm] : grid.points) {
        FloquetRoots fr;
        try {
            fr = sl_floquet_roots(w, p, C, tau, qp, qm, opt);
        } catch (const Error& e) {
            std::ostringstream os;
            os << "floquet scan at q+ = " << qp << ", q- = " << qm << ": " << e.what();
            throw NumericalError(os.str());
        }
        for (cplx r : fr.roots)
            if (r.real() > v.max_growth) {
                v.max_growth = r.real();
                v.witness = Witness{r.imag(), qm, qp, r};
            }
        if (spectrum) spectrum->push_back(std::move(fr));
    }
    v.cls = sl_classify(w, p.alpha, v.max_growth, opt.stable_tol);
    return v;
}

}  // namespace dlattice
