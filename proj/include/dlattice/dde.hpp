#pragma once

// Fixed-step RK4 integrator for the delay-coupled lattice.
//
// Each node keeps a ring of (state, derivative) samples on the uniform time
// grid t_i = i * dt; delayed neighbour values at RK stage times come from
// cubic Hermite interpolation of that ring. The derivative stored at sample i
// is the first RK stage of step i, so no extra right-hand-side evaluations
// are needed. At t = 0 the solution generally has a derivative jump; the
// history's left derivative is kept separately for the interval [-dt, 0].
//
// Because every delay is at least 4 dt, a node never reads a neighbour sample
// newer than a few delays back. Nodes therefore advance independently for
// blocks of floor(min_delay / dt) - 2 steps, with one barrier per block.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dlattice/core.hpp"
#include "dlattice/error.hpp"
#include "dlattice/fhn.hpp"
#include "dlattice/sl.hpp"

namespace dlattice {

// ---------------------------------------------------------------------------
// Node models

/// Stuart-Landau node, state (Re z, Im z).
struct SlNode {
    static constexpr int dim = 2;
    static constexpr int coupled_first = 0;  // components read from neighbours
    static constexpr int coupled_count = 2;

    double alpha = 0.0, beta = 0.0, half_c = 0.0;

    SlNode(const SlParams& p, double C) : alpha(p.alpha), beta(p.beta), half_c(0.5 * C) {}

    void operator()(const double* u, const double* up, const double* left, double* out) const {
        const double x = u[0], y = u[1];
        const double r2 = x * x + y * y;
        out[0] = alpha * x - beta * y - x * r2 + half_c * (up[0] + left[0]);
        out[1] = beta * x + alpha * y - y * r2 + half_c * (up[1] + left[1]);
    }
};

/// FitzHugh-Nagumo node with synaptic gate, state (v, w, s). Only the gate
/// of the neighbours enters.
struct FhnNode {
    static constexpr int dim = 3;
    static constexpr int coupled_first = 2;
    static constexpr int coupled_count = 1;

    FhnParams p;
    double half_c = 0.0;

    FhnNode(const FhnParams& params, double C) : p(params), half_c(0.5 * C) {}

    void operator()(const double* u, const double* up, const double* left, double* out) const {
        const double v = u[0], w = u[1], s = u[2];
        out[0] = v - v * v * v / 3.0 - w + p.current + half_c * (p.v_r - v) * (up[2] + left[2]);
        out[1] = p.eps * (v + p.a - p.b * w);
        out[2] = fhn_rate(v) * (1.0 - s) - 0.6 * s;
    }
};

inline int model_dim(NodeModel m) { return m == NodeModel::StuartLandau ? SlNode::dim : FhnNode::dim; }

// ---------------------------------------------------------------------------
// Dense orbit: Hermite-interpolable record of (state, derivative) samples

struct DenseOrbit {
    double t0 = 0.0;
    double dt = 0.0;
    int dim = 0;
    int nodes = 0;
    std::vector<double> data;  // [sample][node][state..., derivative...]

    std::size_t samples() const {
        const std::size_t stride = static_cast<std::size_t>(nodes) * dim * 2;
        return stride ? data.size() / stride : 0;
    }
    double t_first() const { return t0; }
    double t_last() const { return t0 + dt * (static_cast<double>(samples()) - 1.0); }

    const double* sample(std::size_t i, int node) const {
        return data.data() + (i * nodes + node) * static_cast<std::size_t>(dim) * 2;
    }

    /// State and derivative of `node` at time t by cubic Hermite interpolation.
    void eval(int node, double t, double* u, double* du) const {
        if (samples() < 2) throw DomainError("dense orbit has fewer than two samples");
        const double x = (t - t0) / dt;
        const double last = static_cast<double>(samples()) - 1.0;
        if (x < -1e-9 || x > last + 1e-9) {
            std::ostringstream os;
            os << "dense orbit lookup at t=" << t << " outside [" << t_first() << ", " << t_last() << "]";
            throw DomainError(os.str());
        }
        auto i = static_cast<std::size_t>(std::clamp(std::floor(x), 0.0, last - 1.0));
        const double th = std::clamp(x - static_cast<double>(i), 0.0, 1.0);
        const double* a = sample(i, node);
        const double* b = sample(i + 1, node);
        const double th2 = th * th, th3 = th2 * th;
        const double h00 = 2 * th3 - 3 * th2 + 1, h10 = (th3 - 2 * th2 + th) * dt;
        const double h01 = -2 * th3 + 3 * th2, h11 = (th3 - th2) * dt;
        const double g00 = (6 * th2 - 6 * th) / dt, g10 = 3 * th2 - 4 * th + 1;
        const double g01 = (-6 * th2 + 6 * th) / dt, g11 = 3 * th2 - 2 * th;
        for (int c = 0; c < dim; ++c) {
            const double ya = a[c], da = a[dim + c], yb = b[c], db = b[dim + c];
            if (u) u[c] = h00 * ya + h10 * da + h01 * yb + h11 * db;
            if (du) du[c] = g00 * ya + g10 * da + g01 * yb + g11 * db;
        }
    }
};

// ---------------------------------------------------------------------------
// Initial history

/// History on [-max_delay, 0]: fills state and derivative of node (m, n) at time t <= 0.
struct HistoryInit {
    std::function<void(int m, int n, double t, double* u, double* du)> eval;
};

/// Same constant state at every node.
inline HistoryInit constant_history(std::vector<double> state) {
    return {[state = std::move(state)](int, int, double, double* u, double* du) {
        for (std::size_t c = 0; c < state.size(); ++c) {
            u[c] = state[c];
            du[c] = 0.0;
        }
    }};
}

/// Constant in time; each node gets base + uniform(-amplitude, amplitude) per component.
inline HistoryInit random_history(const std::vector<double>& base, double amplitude, int rows, int cols,
                                  std::uint64_t seed) {
    const int d = static_cast<int>(base.size());
    std::vector<double> values(static_cast<std::size_t>(rows) * cols * d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    for (int node = 0; node < rows * cols; ++node)
        for (int c = 0; c < d; ++c) values[static_cast<std::size_t>(node) * d + c] = base[c] + u(rng);
    return {[values = std::move(values), d, cols](int m, int n, double, double* out, double* dout) {
        const double* v = values.data() + static_cast<std::size_t>(m * cols + n) * d;
        for (int c = 0; c < d; ++c) {
            out[c] = v[c];
            dout[c] = 0.0;
        }
    }};
}

/// FHN rest state everywhere, with the synaptic gate forced to `gate` during
/// the last `width` time units of the history window.
inline HistoryInit kick_history(const FhnSteadyState& rest, double gate, double width) {
    return {[rest, gate, width](int, int, double t, double* u, double* du) {
        u[0] = rest.v;
        u[1] = rest.w;
        u[2] = t > -width ? gate : rest.s;
        du[0] = du[1] = du[2] = 0.0;
    }};
}

/// Plane wave z = a exp(i(Omega t - k1 m - k2 n)), plus a per-node constant
/// offset uniform in (-noise, noise) per component.
inline HistoryInit plane_wave_history(const PlaneWave& w, int rows, int cols, double noise = 0.0,
                                      std::uint64_t seed = 0) {
    std::vector<double> offsets(static_cast<std::size_t>(rows) * cols * 2, 0.0);
    if (noise > 0.0) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-noise, noise);
        for (auto& x : offsets) x = u(rng);
    }
    return {[w, cols, offsets = std::move(offsets)](int m, int n, double t, double* u, double* du) {
        const std::complex<double> z = w.a * std::exp(std::complex<double>(0.0, w.omega * t - w.wv.k1 * m - w.wv.k2 * n));
        const std::complex<double> dz = std::complex<double>(0.0, w.omega) * z;
        const std::size_t k = static_cast<std::size_t>(m * cols + n) * 2;
        u[0] = z.real() + offsets[k];
        u[1] = z.imag() + offsets[k + 1];
        du[0] = dz.real();
        du[1] = dz.imag();
    }};
}

/// Replays a recorded orbit with a per-node time shift:
/// v_{m,n}(t) = u_ref(t_ref + t + eta_{m,n}). A single-node orbit is used for
/// every node. The orbit is held by reference and must outlive simulate().
inline HistoryInit shifted_history(const DenseOrbit& orbit, const Grid2<double>& eta, double t_ref) {
    return {[&orbit, eta, t_ref](int m, int n, double t, double* u, double* du) {
        const int node = orbit.nodes == 1 ? 0 : m * eta.cols() + n;
        orbit.eval(node, t_ref + t + eta(m, n), u, du);
    }};
}

// ---------------------------------------------------------------------------
// Simulation

struct SimOptions {
    double t_end = 100.0;
    double dt = 0.0;              // 0 -> min(0.01, min_delay / 8)
    int record_every = 10;        // snapshot cadence in steps
    double record_from = 0.0;     // no snapshots before this time
    int threads = 0;              // 0 -> DLATTICE_THREADS or 1
    int spike_component = 0;      // v for FHN, Re z for SL
    double spike_threshold = 0.0;
    double refractory = 1.0;
    bool detect_spikes = true;
    double dense_from = std::numeric_limits<double>::infinity();  // dense record for t >= dense_from
    int dense_node = -1;          // -1 records every node
};

struct Trajectory {
    int rows = 0, cols = 0, dim = 0;
    double dt = 0.0;
    int record_every = 1;
    std::vector<double> times;
    std::vector<double> frames;               // [frame][m][n][component]
    std::vector<std::vector<double>> spikes;  // per node (row-major), upward threshold crossings
    std::vector<double> final_state;          // [m][n][component] at t_end
    double t_final = 0.0;
    DenseOrbit dense;

    std::size_t frame_count() const { return times.size(); }
    std::size_t frame_size() const { return static_cast<std::size_t>(rows) * cols * dim; }
    std::span<const double> frame(std::size_t k) const { return {frames.data() + k * frame_size(), frame_size()}; }
    double value(std::size_t k, int m, int n, int c) const {
        return frames[k * frame_size() + (static_cast<std::size_t>(m) * cols + n) * dim + c];
    }
    const std::vector<double>& node_spikes(int m, int n) const { return spikes[static_cast<std::size_t>(m) * cols + n]; }
};

inline double default_dt(const DelayMap& delays) { return std::min(0.01, delays.min_delay() / 8.0); }

inline double default_discard(const DelayMap& delays) { return 10.0 * delays.max_delay(); }

/// Length of the history window simulate() samples before t = 0.
inline double history_span(const DelayMap& delays, double dt) {
    return (std::ceil(delays.max_delay() / dt * (1.0 - 1e-12)) + 2.0) * dt;
}

/// Worker count: explicit request, else DLATTICE_THREADS, else 1.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DLATTICE_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min(v, 1024L));
    }
    return 1;
}

namespace detail {

// Hermite lookup of a delayed value relative to the current step: sample
// offset `base` (negative) and weights for (y_i, dt y'_i, y_{i+1}, dt y'_{i+1}).
struct Lag {
    int base = 0;
    double h00 = 1, h10 = 0, h01 = 0, h11 = 0;
};

inline Lag make_lag(double steps_back, double stage, double dt) {
    const double s = stage - steps_back;
    const double fb = std::floor(s);
    const double th = s - fb;
    const double th2 = th * th, th3 = th2 * th;
    return Lag{static_cast<int>(fb), 2 * th3 - 3 * th2 + 1, (th3 - 2 * th2 + th) * dt, -2 * th3 + 3 * th2,
               (th3 - th2) * dt};
}

// Delay measured in steps; snapped to an integer when it is one up to rounding.
inline double delay_steps(double tau, double dt) {
    const double d = tau / dt;
    const double r = std::round(d);
    return std::abs(d - r) <= 1e-9 * std::max(1.0, r) ? r : d;
}

// Smallest root in (0, 1] of the Hermite cubic through (y0, d0), (y1, d1) minus thr.
inline double hermite_crossing(double y0, double d0, double y1, double d1, double dt, double thr) {
    auto h = [&](double th) {
        const double th2 = th * th, th3 = th2 * th;
        return (2 * th3 - 3 * th2 + 1) * y0 + (th3 - 2 * th2 + th) * dt * d0 + (-2 * th3 + 3 * th2) * y1 +
               (th3 - th2) * dt * d1 - thr;
    };
    double lo = 0.0, hi = 1.0;
    // Bracket the first sign change on a coarse grid; the cubic can wiggle.
    const int n = 8;
    for (int k = 1; k <= n; ++k) {
        const double x = static_cast<double>(k) / n;
        if (h(x) >= 0.0) {
            hi = x;
            lo = static_cast<double>(k - 1) / n;
            break;
        }
    }
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) >= 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

template <class Model>
class Integrator {
public:
    static constexpr int D = Model::dim;

    Integrator(const Model& model, int rows, int cols, const DelayMap& delays, const HistoryInit& init,
               const SimOptions& opt)
        : model_(model), rows_(rows), cols_(cols), nodes_(rows * cols), opt_(opt) {
        if (delays.rows() != rows || delays.cols() != cols) throw DomainError("delay map shape does not match lattice");
        delays.validate();
        if (!(opt.t_end > 0.0)) throw DomainError("t_end must be > 0");
        if (opt.record_every < 1) throw DomainError("record_every must be >= 1");
        dt_ = opt.dt > 0.0 ? opt.dt : default_dt(delays);
        if (dt_ > delays.min_delay() / 4.0 * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "dt=" << dt_ << " exceeds min_delay/4=" << delays.min_delay() / 4.0;
            throw DomainError(os.str());
        }
        steps_ = static_cast<long long>(std::ceil(opt.t_end / dt_ - 1e-9));

        double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
        lags_.resize(static_cast<std::size_t>(nodes_) * 2 * 3);
        for (int m = 0; m < rows; ++m)
            for (int n = 0; n < cols; ++n)
                for (int e = 0; e < 2; ++e) {
                    const double ds = delay_steps(e == 0 ? delays.down(m, n) : delays.right(m, n), dt_);
                    dmin = std::min(dmin, ds);
                    dmax = std::max(dmax, ds);
                    for (int st = 0; st < 3; ++st)
                        lags_[(static_cast<std::size_t>(m * cols + n) * 2 + e) * 3 + st] = make_lag(ds, 0.5 * st, dt_);
                }
        // A sample's derivative is written one step after its state, so readers
        // must stay two samples behind the start of the current block.
        block_ = std::max(1LL, static_cast<long long>(std::floor(dmin)) - 2);
        depth_ = static_cast<long long>(std::ceil(dmax)) + block_ + 4;
        ring_.assign(static_cast<std::size_t>(nodes_) * depth_ * 2 * D, 0.0);

        for (int m = 0; m < rows; ++m)
            for (int n = 0; n < cols; ++n)
                for (long long i = -(static_cast<long long>(std::ceil(dmax * (1.0 - 1e-12))) + 2); i <= 0; ++i) {
                    double* s = slot(m * cols + n, i);
                    init.eval(m, n, static_cast<double>(i) * dt_, s, s + D);
                    for (int c = 0; c < 2 * D; ++c)
                        if (!std::isfinite(s[c])) throw DomainError("initial history is not finite");
                }
        // Sample 0 is overwritten with the right derivative of the solution;
        // the history's own derivative stays in use on [-dt, 0].
        history_d0_.resize(static_cast<std::size_t>(nodes_) * D);
        for (int node = 0; node < nodes_; ++node) std::copy_n(slot(node, 0) + D, D, history_d0_.begin() + node * D);
    }

    Trajectory run() {
        Trajectory tr;
        tr.rows = rows_;
        tr.cols = cols_;
        tr.dim = D;
        tr.dt = dt_;
        tr.record_every = opt_.record_every;
        for (long long n = 0; n <= steps_; n += opt_.record_every)
            if (static_cast<double>(n) * dt_ >= opt_.record_from - 1e-12) tr.times.push_back(static_cast<double>(n) * dt_);
        first_frame_step_ = tr.times.empty() ? steps_ + 1 : std::llround(tr.times.front() / dt_);
        tr.frames.assign(tr.times.size() * tr.frame_size(), 0.0);
        tr.spikes.assign(nodes_, {});
        tr.final_state.assign(static_cast<std::size_t>(nodes_) * D, 0.0);
        tr.t_final = static_cast<double>(steps_) * dt_;

        dense_first_ = steps_ + 1;
        if (std::isfinite(opt_.dense_from)) {
            dense_first_ = std::max(0LL, static_cast<long long>(std::ceil(opt_.dense_from / dt_ - 1e-9)));
            if (opt_.dense_node >= nodes_) throw DomainError("dense_node outside the lattice");
            tr.dense.t0 = static_cast<double>(dense_first_) * dt_;
            tr.dense.dt = dt_;
            tr.dense.dim = D;
            tr.dense.nodes = opt_.dense_node >= 0 ? 1 : nodes_;
            if (dense_first_ <= steps_)
                tr.dense.data.assign(static_cast<std::size_t>(steps_ - dense_first_ + 1) * tr.dense.nodes * 2 * D, 0.0);
        }

        const int threads = std::clamp(resolve_threads(opt_.threads), 1, nodes_);
        fail_step_.store(std::numeric_limits<long long>::max());
        if (threads == 1) {
            for (long long n0 = 0; n0 <= steps_ && !failed(); n0 += block_) advance(tr, 0, nodes_, n0);
        } else {
            std::barrier sync(threads);
            auto work = [&](int w) {
                const int lo = static_cast<int>(static_cast<long long>(nodes_) * w / threads);
                const int hi = static_cast<int>(static_cast<long long>(nodes_) * (w + 1) / threads);
                for (long long n0 = 0; n0 <= steps_; n0 += block_) {
                    advance(tr, lo, hi, n0);
                    sync.arrive_and_wait();
                    if (failed()) break;
                }
            };
            std::vector<std::jthread> pool;
            for (int w = 1; w < threads; ++w) pool.emplace_back(work, w);
            work(0);
        }
        if (failed()) {
            const int node = fail_node_.load();
            std::ostringstream os;
            os << "non-finite state at t=" << static_cast<double>(fail_step_.load()) * dt_ << " in node (" << node / cols_
               << ", " << node % cols_ << ")";
            throw NumericalError(os.str());
        }
        return tr;
    }

private:
    double* slot(int node, long long i) {
        long long k = i % depth_;
        if (k < 0) k += depth_;
        return ring_.data() + (static_cast<std::size_t>(node) * depth_ + k) * 2 * D;
    }

    bool failed() const { return fail_step_.load(std::memory_order_relaxed) != std::numeric_limits<long long>::max(); }

    void report_failure(long long step, int node) {
        // Keep the earliest (step, node) so the message does not depend on scheduling.
        long long cur = fail_step_.load();
        while (step < cur && !fail_step_.compare_exchange_weak(cur, step)) {
        }
        std::lock_guard lock(fail_mutex_);
        if (step < fail_seen_step_ || (step == fail_seen_step_ && node < fail_node_.load())) {
            fail_seen_step_ = step;
            fail_node_.store(node);
        }
    }

    void delayed(int node, int src, int edge, int stage, long long n, double* out) {
        const Lag& L = lags_[(static_cast<std::size_t>(node) * 2 + edge) * 3 + stage];
        const long long i = n + L.base;
        if (i + 1 > n || i < n - depth_ + 1) throw DomainError("history lookup out of range");
        const double* a = slot(src, i);
        const double* b = slot(src, i + 1);
        const double* db = i + 1 == 0 ? history_d0_.data() + static_cast<std::size_t>(src) * D : b + D;
        for (int c = Model::coupled_first; c < Model::coupled_first + Model::coupled_count; ++c)
            out[c] = L.h00 * a[c] + L.h10 * a[D + c] + L.h01 * b[c] + L.h11 * db[c];
    }

    void advance(Trajectory& tr, int lo, int hi, long long n0) {
        const long long n1 = std::min(n0 + block_, steps_ + 1);
        const int comp = opt_.spike_component;
        const bool spikes = opt_.detect_spikes && comp >= 0 && comp < D;
        for (int node = lo; node < hi; ++node) {
            const int m = node / cols_, c = node % cols_;
            const int up = wrap_index(m - 1, rows_) * cols_ + c;
            const int left = m * cols_ + wrap_index(c - 1, cols_);
            double u[D], k1[D], k2[D], k3[D], k4[D], tmp[D];
            double dn[3][D] = {}, rt[3][D] = {};
            for (long long n = n0; n < n1; ++n) {
                double* cur = slot(node, n);
                for (int k = 0; k < 3; ++k) {
                    delayed(node, up, 0, k, n, dn[k]);
                    delayed(node, left, 1, k, n, rt[k]);
                }
                std::copy(cur, cur + D, u);
                model_(u, dn[0], rt[0], k1);
                std::copy(k1, k1 + D, cur + D);

                if (n >= first_frame_step_ && (n - first_frame_step_) % opt_.record_every == 0) {
                    const auto f = static_cast<std::size_t>((n - first_frame_step_) / opt_.record_every);
                    std::copy(u, u + D, tr.frames.begin() + static_cast<std::ptrdiff_t>(f * tr.frame_size() + static_cast<std::size_t>(node) * D));
                }
                if (n >= dense_first_ && (opt_.dense_node < 0 || opt_.dense_node == node)) {
                    const int dn_idx = opt_.dense_node < 0 ? node : 0;
                    double* dst = tr.dense.data.data() +
                                  (static_cast<std::size_t>(n - dense_first_) * tr.dense.nodes + dn_idx) * 2 * D;
                    std::copy(u, u + D, dst);
                    std::copy(k1, k1 + D, dst + D);
                }
                if (spikes && n > 0) {
                    const double* prev = slot(node, n - 1);
                    const double thr = opt_.spike_threshold;
                    if (prev[comp] < thr && u[comp] >= thr) {
                        const double th = hermite_crossing(prev[comp], prev[D + comp], u[comp], k1[comp], dt_, thr);
                        const double t = (static_cast<double>(n - 1) + th) * dt_;
                        auto& ev = tr.spikes[node];
                        if (ev.empty() || t - ev.back() >= opt_.refractory) ev.push_back(t);
                    }
                }
                if (n == steps_) {
                    std::copy(u, u + D, tr.final_state.begin() + static_cast<std::ptrdiff_t>(node) * D);
                    break;
                }

                const double h = dt_;
                for (int i = 0; i < D; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
                model_(tmp, dn[1], rt[1], k2);
                for (int i = 0; i < D; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
                model_(tmp, dn[1], rt[1], k3);
                for (int i = 0; i < D; ++i) tmp[i] = u[i] + h * k3[i];
                model_(tmp, dn[2], rt[2], k4);

                double* next = slot(node, n + 1);
                bool finite = true;
                for (int i = 0; i < D; ++i) {
                    next[i] = u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    next[D + i] = 0.0;
                    finite = finite && std::isfinite(next[i]);
                }
                if (!finite) {
                    report_failure(n + 1, node);
                    break;
                }
            }
        }
    }

    Model model_;
    int rows_, cols_, nodes_;
    SimOptions opt_;
    double dt_ = 0.0;
    long long steps_ = 0;
    long long block_ = 1;
    long long depth_ = 0;
    long long first_frame_step_ = 0;
    long long dense_first_ = 0;
    std::vector<Lag> lags_;
    std::vector<double> ring_;
    std::vector<double> history_d0_;
    std::atomic<long long> fail_step_{0};
    std::atomic<int> fail_node_{0};
    std::mutex fail_mutex_;
    long long fail_seen_step_ = std::numeric_limits<long long>::max();
};

}  // namespace detail

/// Integrates the lattice from `init` up to opt.t_end.
template <class Model>
Trajectory simulate(const Model& model, int rows, int cols, const DelayMap& delays, const HistoryInit& init,
                    const SimOptions& opt) {
    detail::Integrator<Model> integ(model, rows, cols, delays, init, opt);
    return integ.run();
}

inline Trajectory simulate(const LatticeSpec& spec, const DelayMap& delays, const HistoryInit& init,
                           const SimOptions& opt) {
    spec.validate();
    if (spec.model() == NodeModel::StuartLandau)
        return simulate(SlNode(spec.sl(), spec.coupling), spec.rows, spec.cols, delays, init, opt);
    return simulate(FhnNode(spec.fhn(), spec.coupling), spec.rows, spec.cols, delays, init, opt);
}

// ---------------------------------------------------------------------------
// Observables

/// Upward threshold crossings of one component in the recorded frames, per
/// node, linearly interpolated, with a refractory window.
inline std::vector<std::vector<double>> detect_spikes(const Trajectory& tr, int component, double threshold,
                                                      double refractory = 1.0) {
    if (component < 0 || component >= tr.dim) throw DomainError("spike component out of range");
    std::vector<std::vector<double>> out(static_cast<std::size_t>(tr.rows) * tr.cols);
    for (int m = 0; m < tr.rows; ++m)
        for (int n = 0; n < tr.cols; ++n) {
            auto& ev = out[static_cast<std::size_t>(m) * tr.cols + n];
            for (std::size_t k = 1; k < tr.frame_count(); ++k) {
                const double a = tr.value(k - 1, m, n, component), b = tr.value(k, m, n, component);
                if (!(a < threshold && b >= threshold)) continue;
                const double t = tr.times[k - 1] + (threshold - a) / (b - a) * (tr.times[k] - tr.times[k - 1]);
                if (ev.empty() || t - ev.back() >= refractory) ev.push_back(t);
            }
        }
    return out;
}

struct PeriodEstimate {
    double period = 0.0;
    double stddev = 0.0;
    int events = 0;
};

/// Mean and standard deviation of inter-event intervals after t_discard.
inline PeriodEstimate estimate_period(std::span<const double> events, double t_discard) {
    std::vector<double> ev;
    for (double t : events)
        if (t >= t_discard) ev.push_back(t);
    if (ev.size() < 3) {
        std::ostringstream os;
        os << "insufficient data: " << ev.size() << " events after t=" << t_discard << ", need 3";
        throw NumericalError(os.str());
    }
    PeriodEstimate pe;
    pe.events = static_cast<int>(ev.size());
    const double k = static_cast<double>(ev.size() - 1);
    pe.period = (ev.back() - ev.front()) / k;
    double ss = 0.0;
    for (std::size_t i = 1; i < ev.size(); ++i) ss += (ev[i] - ev[i - 1] - pe.period) * (ev[i] - ev[i - 1] - pe.period);
    pe.stddev = std::sqrt(ss / k);
    return pe;
}

/// Period from the online spike record of node (m, n).
inline PeriodEstimate estimate_period(const Trajectory& tr, double t_discard, int m = 0, int n = 0) {
    return estimate_period(tr.node_spikes(m, n), t_discard);
}

}  // namespace dlattice
