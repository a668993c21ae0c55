#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "dlattice/error.hpp"

namespace dlattice {

using cplx = std::complex<double>;

/// Largest branch index accepted by lambert_w.
inline constexpr int kMaxBranch = 4096;

namespace detail {

inline constexpr double kInvE = 0.36787944117144232160;  // 1/e

inline cplx lambert_branch_point_series(cplx p, double sign) {
    // W = -1 + s p - p^2/3 + s 11/72 p^3 - 43/540 p^4, p = sqrt(2(e z + 1)).
    cplx sp = sign * p;
    cplx p2 = p * p;
    return -1.0 + sp - p2 / 3.0 + sp * p2 * (11.0 / 72.0) - p2 * p2 * (43.0 / 540.0);
}

inline cplx lambert_asymptotic(cplx log_z, int branch) {
    cplx l1 = log_z + cplx(0.0, 2.0 * std::numbers::pi * branch);
    cplx l2 = std::log(l1);
    return l1 - l2 + l2 / l1 + l2 * (l2 - 2.0) / (2.0 * l1 * l1);
}

[[noreturn]] inline void lambert_fail(int branch, cplx z, cplx w) {
    std::ostringstream os;
    os.precision(17);
    os << "lambert_w did not converge: branch " << branch << ", z = " << z << ", last iterate " << w;
    throw NumericalError(os.str());
}

// Newton on w + log w = L, the logarithmic form of w e^w = z for branch k when
// L = Log z + 2 pi i k. Valid when |w| is large; never overflows.
inline cplx lambert_log_newton(cplx target, cplx w, int branch, cplx log_z) {
    for (int it = 0; it < 60; ++it) {
        cplx f = w + std::log(w) - target;
        cplx step = f / (1.0 + 1.0 / w);
        w -= step;
        if (std::abs(step) <= 1e-13 * std::max(1.0, std::abs(w))) return w;
    }
    lambert_fail(branch, std::exp(log_z), w);
}

}  // namespace detail

/// Branch `branch` of the complex Lambert W function: the solution w of
/// w e^w = z with Im w near 2*pi*branch for large |z|.
///
/// Halley iteration from a per-region initial guess: the square-root series
/// near the branch point -1/e, the Taylor series near 0 for the principal
/// branch, and the asymptotic log series elsewhere. Branch cuts follow the
/// usual convention (counter-clockwise continuity).
inline cplx lambert_w(int branch, cplx z) {
    using detail::kInvE;
    if (std::abs(branch) > kMaxBranch) throw DomainError("lambert_w: |branch| exceeds kMaxBranch");
    if (z == cplx(0.0, 0.0)) {
        if (branch == 0) return {0.0, 0.0};
        throw DomainError("lambert_w: z = 0 is a singularity of every nonprincipal branch");
    }
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw DomainError("lambert_w: non-finite argument");

    const double near_branch_point = std::abs(z + kInvE);
    cplx w;
    if (branch == 0 && near_branch_point < 0.3) {
        w = detail::lambert_branch_point_series(std::sqrt(2.0 * (std::numbers::e * z + 1.0)), 1.0);
    } else if (branch == -1 && near_branch_point < 0.3 && z.imag() >= 0.0) {
        w = detail::lambert_branch_point_series(std::sqrt(2.0 * (std::numbers::e * z + 1.0)), -1.0);
    } else if (branch == 1 && near_branch_point < 0.3 && z.imag() < 0.0) {
        w = detail::lambert_branch_point_series(std::sqrt(2.0 * (std::numbers::e * z + 1.0)), -1.0);
    } else if (branch == 0 && std::abs(z) < 0.5) {
        w = z * (1.0 - z * (1.0 - z * (1.5 - z * (8.0 / 3.0))));
    } else if (branch == 0 && std::abs(z) < 3.0) {
        // log1p is a fair guess in the intermediate principal region.
        w = std::log(1.0 + z);
        if (!std::isfinite(w.real())) w = detail::lambert_asymptotic(std::log(z), 0);
    } else {
        w = detail::lambert_asymptotic(std::log(z), branch);
    }

    if (w == cplx(-1.0, 0.0) && near_branch_point == 0.0) return w;

    // Halley on f(w) = w e^w - z.
    for (int it = 0; it < 60; ++it) {
        cplx ew = std::exp(w);
        cplx f = w * ew - z;
        cplx wp1 = w + 1.0;
        cplx denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if (denom == cplx(0.0, 0.0)) break;
        cplx step = f / denom;
        w -= step;
        if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) detail::lambert_fail(branch, z, w);
        if (std::abs(step) <= 1e-13 * std::max(1.0, std::abs(w))) break;
        if (it == 59) detail::lambert_fail(branch, z, w);
    }
    return w;
}

/// Lambert W of z given as log_z = log(z) (any branch of the logarithm).
/// Avoids overflow for arguments such as tau*C*exp(-(alpha+i beta)*tau)
/// whose modulus exceeds the double range.
inline cplx lambert_w_from_log(int branch, cplx log_z) {
    if (std::abs(branch) > kMaxBranch) throw DomainError("lambert_w: |branch| exceeds kMaxBranch");
    // Reduce to the principal logarithm so the branch index keeps its meaning.
    cplx principal_log(log_z.real(), std::remainder(log_z.imag(), 2.0 * std::numbers::pi));
    if (principal_log.imag() <= -std::numbers::pi) principal_log += cplx(0.0, 2.0 * std::numbers::pi);
    if (principal_log.real() < 300.0) return lambert_w(branch, std::exp(principal_log));
    cplx target = principal_log + cplx(0.0, 2.0 * std::numbers::pi * branch);
    return detail::lambert_log_newton(target, detail::lambert_asymptotic(principal_log, branch), branch, principal_log);
}

}  // namespace dlattice
