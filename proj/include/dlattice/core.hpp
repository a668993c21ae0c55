#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "dlattice/error.hpp"

namespace dlattice {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Maps an angle to its principal value in (-pi, pi].
inline double principal_angle(double x) {
    double r = std::remainder(x, kTwoPi);
    if (r <= -std::numbers::pi) r += kTwoPi;
    return r;
}

/// True if two angles coincide modulo 2*pi within `tol`.
inline bool same_angle(double x, double y, double tol = 1e-12) {
    return std::abs(principal_angle(x - y)) <= tol;
}

/// Index on a ring of length `n`; negative and overflowing indices wrap.
inline int wrap_index(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

/// Dense row-major M x N matrix.
template <class T>
class Grid2 {
public:
    Grid2() = default;
    Grid2(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 1 || cols < 1) throw DomainError("grid dimensions must be positive");
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(int m, int n) { return data_[static_cast<std::size_t>(m) * cols_ + n]; }
    const T& operator()(int m, int n) const { return data_[static_cast<std::size_t>(m) * cols_ + n]; }

    /// Torus access: indices wrap periodically.
    const T& wrapped(int m, int n) const { return (*this)(wrap_index(m, rows_), wrap_index(n, cols_)); }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    friend bool operator==(const Grid2&, const Grid2&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

enum class NodeModel { StuartLandau, FitzHughNagumo };

inline const char* to_string(NodeModel m) {
    return m == NodeModel::StuartLandau ? "sl" : "fhn";
}

struct SlParams {
    double alpha = 0.0;
    double beta = 0.0;
};

/// FitzHugh-Nagumo node with an excitatory synaptic gate. Defaults are the
/// fixed values a=0.7, b=0.8, eps=0.08 and reversal potential v_r=2.
struct FhnParams {
    double current = 0.0;  // I
    double a = 0.7;
    double b = 0.8;
    double eps = 0.08;
    double v_r = 2.0;
};

using ModelParams = std::variant<SlParams, FhnParams>;

/// M x N torus of identical nodes with unidirectional coupling from the node
/// above (m-1, n) and the node to the left (m, n-1).
struct LatticeSpec {
    int rows = 1;  // M
    int cols = 1;  // N
    ModelParams params = SlParams{};
    double coupling = 0.0;  // C

    NodeModel model() const {
        return std::holds_alternative<SlParams>(params) ? NodeModel::StuartLandau : NodeModel::FitzHughNagumo;
    }
    const SlParams& sl() const { return std::get<SlParams>(params); }
    const FhnParams& fhn() const { return std::get<FhnParams>(params); }
    int nodes() const { return rows * cols; }

    void validate() const {
        if (rows < 1) throw DomainError("lattice rows M must be >= 1");
        if (cols < 1) throw DomainError("lattice cols N must be >= 1");
        if (!(coupling >= 0.0) || !std::isfinite(coupling)) throw DomainError("coupling C must be finite and >= 0");
    }
};

/// Lattice wavevector (k1, k2), stored as principal values in (-pi, pi].
/// The rotated components k+ = (k1+k2)/2 and k- = (k1-k2)/2 decouple the
/// linearized dynamics.
struct WaveVector {
    double k1 = 0.0;
    double k2 = 0.0;
    int l = 0;  // mode index along rows, 0 <= l < M (l = 0 is the homogeneous row mode)
    int j = 0;  // mode index along columns

    double kplus() const { return 0.5 * (k1 + k2); }
    double kminus() const { return 0.5 * (k1 - k2); }

    static WaveVector from_rotated(double kplus, double kminus) {
        return WaveVector{kplus + kminus, kplus - kminus, 0, 0};
    }

    /// Discrete mode (l, j) of an M x N lattice: k = 2*pi*(l/M, j/N).
    static WaveVector from_indices(int l, int j, int rows, int cols) {
        l = wrap_index(l, rows);
        j = wrap_index(j, cols);
        // Pick the representative in (-M/2, M/2] so the angle is already principal.
        int ls = 2 * l > rows ? l - rows : l;
        int js = 2 * j > cols ? j - cols : j;
        return WaveVector{kTwoPi * ls / rows, kTwoPi * js / cols, l, j};
    }
};

/// cos(x) with rounding residue at x = +-pi/2 snapped to zero.
inline double snapped_cos(double x) {
    const double c = std::cos(x);
    return std::abs(c) <= 1e-12 ? 0.0 : c;
}

/// cos(k-), snapped so that decoupled modes are recognised exactly.
inline double coupling_cos(const WaveVector& wv) { return snapped_cos(wv.kminus()); }

/// Modes are equal if both components agree modulo 2*pi.
inline bool same_mode(const WaveVector& a, const WaveVector& b, double tol = 1e-12) {
    return same_angle(a.k1, b.k1, tol) && same_angle(a.k2, b.k2, tol);
}

/// All M*N Fourier modes of the torus, row-major in (l, j).
inline std::vector<WaveVector> enumerate_modes(int rows, int cols) {
    if (rows < 1 || cols < 1) throw DomainError("lattice dimensions must be positive");
    std::vector<WaveVector> modes;
    modes.reserve(static_cast<std::size_t>(rows) * cols);
    for (int l = 0; l < rows; ++l)
        for (int j = 0; j < cols; ++j) modes.push_back(WaveVector::from_indices(l, j, rows, cols));
    return modes;
}

inline std::vector<WaveVector> enumerate_modes(const LatticeSpec& spec) {
    spec.validate();
    return enumerate_modes(spec.rows, spec.cols);
}

/// Per-edge coupling delays. down(m, n) delays the signal from (m-1, n);
/// right(m, n) delays the signal from (m, n-1).
struct DelayMap {
    Grid2<double> down;
    Grid2<double> right;

    static DelayMap homogeneous(int rows, int cols, double tau) {
        DelayMap d{Grid2<double>(rows, cols, tau), Grid2<double>(rows, cols, tau)};
        d.validate();
        return d;
    }

    int rows() const { return down.rows(); }
    int cols() const { return down.cols(); }

    double min_delay() const {
        return std::min(*std::min_element(down.data().begin(), down.data().end()),
                        *std::min_element(right.data().begin(), right.data().end()));
    }
    double max_delay() const {
        return std::max(*std::max_element(down.data().begin(), down.data().end()),
                        *std::max_element(right.data().begin(), right.data().end()));
    }

    void validate() const {
        if (down.rows() != right.rows() || down.cols() != right.cols())
            throw DomainError("delay matrices have different shapes");
        for (const auto* g : {&down, &right})
            for (double v : g->data())
                if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("all delays must be finite and > 0");
    }

    friend bool operator==(const DelayMap&, const DelayMap&) = default;
};

}  // namespace dlattice
