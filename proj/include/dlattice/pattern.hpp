#pragma once

// Time-shift encoding of spatial patterns.
//
// Substituting u_{m,n}(t) = v_{m,n}(t - eta_{m,n}) into the homogeneous
// lattice gives the same equations with edge delays
//   down(m, n)  = tau - eta(m, n) + eta(m-1, n)
//   right(m, n) = tau - eta(m, n) + eta(m, n-1),
// so any attractor of the homogeneous lattice reappears with node (m, n)
// running eta(m, n) ahead.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlattice/core.hpp"
#include "dlattice/error.hpp"

namespace dlattice {

using ShiftField = Grid2<double>;

/// Edge delays realising the shift field on a lattice with base delay tau.
/// Throws DomainError listing every edge whose delay would be <= 0.
inline DelayMap delays_from_timeshifts(const ShiftField& eta, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("tau must be finite and > 0");
    for (double x : eta.data())
        if (!std::isfinite(x)) throw DomainError("shift field has non-finite entries");
    const int M = eta.rows(), N = eta.cols();
    DelayMap d{Grid2<double>(M, N), Grid2<double>(M, N)};
    std::ostringstream bad;
    int nbad = 0;
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) {
            d.down(m, n) = tau + (eta.wrapped(m - 1, n) - eta(m, n));
            d.right(m, n) = tau + (eta.wrapped(m, n - 1) - eta(m, n));
            for (auto [name, v] : {std::pair{"down", d.down(m, n)}, std::pair{"right", d.right(m, n)}}) {
                if (v > 0.0) continue;
                if (nbad < 20) bad << (nbad ? ", " : "") << name << "(" << m << "," << n << ")=" << v;
                ++nbad;
            }
        }
    if (nbad) {
        std::ostringstream os;
        os << nbad << " nonpositive delay(s): " << bad.str() << (nbad > 20 ? ", ..." : "");
        throw DomainError(os.str());
    }
    return d;
}

// ---------------------------------------------------------------------------
// PGM images

struct GrayImage {
    int rows = 0;
    int cols = 0;
    int maxval = 255;
    std::vector<std::uint8_t> pixels;  // row-major

    int at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
};

namespace detail {

inline std::string pgm_token(std::istream& in) {
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string rest;
            std::getline(in, rest);
            if (!tok.empty()) break;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    if (tok.empty()) throw FormatError("PGM: unexpected end of file");
    return tok;
}

inline int pgm_int(std::istream& in, const char* what) {
    const std::string tok = pgm_token(in);
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != tok.size() || v < 0) throw FormatError(std::string("PGM: bad ") + what + " '" + tok + "'");
    return v;
}

}  // namespace detail

/// Reads an 8-bit PGM (P2 ASCII or P5 binary).
inline GrayImage read_pgm(std::istream& in) {
    const std::string magic = detail::pgm_token(in);
    if (magic != "P2" && magic != "P5") throw FormatError("PGM: unsupported magic '" + magic + "'");
    GrayImage img;
    img.cols = detail::pgm_int(in, "width");
    img.rows = detail::pgm_int(in, "height");
    img.maxval = detail::pgm_int(in, "maxval");
    if (img.rows < 1 || img.cols < 1) throw FormatError("PGM: empty image");
    if (img.maxval < 1 || img.maxval > 255)
        throw FormatError("PGM: unsupported bit depth (maxval " + std::to_string(img.maxval) + ", need 1..255)");
    const std::size_t count = static_cast<std::size_t>(img.rows) * img.cols;
    img.pixels.resize(count);
    if (magic == "P2") {
        for (std::size_t i = 0; i < count; ++i) {
            const int v = detail::pgm_int(in, "pixel");
            if (v > img.maxval) throw FormatError("PGM: pixel value exceeds maxval");
            img.pixels[i] = static_cast<std::uint8_t>(v);
        }
    } else {
        // Header ends with exactly one whitespace byte, consumed by pgm_token.
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count) throw FormatError("PGM: truncated pixel data");
        for (auto v : img.pixels)
            if (v > img.maxval) throw FormatError("PGM: pixel value exceeds maxval");
    }
    return img;
}

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return read_pgm(in);
}

/// Writes a binary (P5) PGM.
inline void write_pgm(std::ostream& out, const GrayImage& img) {
    out << "P5\n" << img.cols << ' ' << img.rows << '\n' << img.maxval << '\n';
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path + "'");
    write_pgm(out, img);
}

/// eta = eta_min + (g / maxval) (eta_max - eta_min); image row m is lattice row m.
inline ShiftField eta_from_image(const GrayImage& img, double eta_min, double eta_max) {
    if (!(eta_min <= eta_max)) throw DomainError("eta_min must not exceed eta_max");
    if (img.maxval < 1 || img.maxval > 255) throw DomainError("unsupported bit depth");
    ShiftField eta(img.rows, img.cols);
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c)
            eta(r, c) = eta_min + static_cast<double>(img.at(r, c)) / img.maxval * (eta_max - eta_min);
    return eta;
}

inline ShiftField eta_from_image(const GrayImage& img, double eta_min, double eta_max, int rows, int cols) {
    if (img.rows != rows || img.cols != cols) {
        std::ostringstream os;
        os << "image is " << img.rows << "x" << img.cols << ", lattice is " << rows << "x" << cols;
        throw DomainError(os.str());
    }
    return eta_from_image(img, eta_min, eta_max);
}

// ---------------------------------------------------------------------------
// Fidelity of an encoded pattern

struct FidelityReport {
    double correlation = std::numeric_limits<double>::quiet_NaN();  // NaN when the target is constant
    bool correlation_defined = false;
    double max_dev = 0.0;                       // time units, circular
    std::vector<std::pair<int, int>> missing_nodes;
    Grid2<double> measured;                     // phase lead of each node over (0, 0), in [0, T)

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["correlation"] = correlation_defined ? nlohmann::json(correlation) : nlohmann::json(nullptr);
        j["max_dev"] = max_dev;
        j["missing_nodes"] = nlohmann::json::array();
        for (auto [m, n] : missing_nodes) j["missing_nodes"].push_back({m, n});
        return j;
    }
};

namespace detail {

inline double wrap_period(double x, double T) {
    double r = std::fmod(x, T);
    if (r < 0.0) r += T;
    return r >= T ? 0.0 : r;
}

inline double circular_distance(double a, double b, double T) {
    const double d = wrap_period(a - b, T);
    return std::min(d, T - d);
}

}  // namespace detail

/// Compares measured spike-time offsets with the encoded shifts.
///
/// spikes holds upward-crossing times per node (row-major). Only events at
/// t >= t_from count. A node that runs eta ahead spikes eta earlier, so the
/// measured offset of node (m, n) is its phase lead (t_ref - t_node) mod T,
/// averaged circularly over its events, and is compared with
/// (eta(m, n) - eta(0, 0)) mod T.
inline FidelityReport verify_pattern(const std::vector<std::vector<double>>& spikes, const ShiftField& eta,
                                     double T, double t_from) {
    if (!(T > 0.0)) throw DomainError("period must be > 0");
    const int M = eta.rows(), N = eta.cols();
    if (spikes.size() != static_cast<std::size_t>(M) * N) throw DomainError("spike record does not match shift field");

    auto after = [&](int node) {
        std::vector<double> ev;
        for (double t : spikes[node])
            if (t >= t_from) ev.push_back(t);
        return ev;
    };
    FidelityReport rep;
    rep.measured = Grid2<double>(M, N, std::numeric_limits<double>::quiet_NaN());
    const auto ref = after(0);
    if (ref.empty()) {
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n) rep.missing_nodes.emplace_back(m, n);
        rep.max_dev = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }
    const double t_ref = ref.front();
    const double w = kTwoPi / T;

    std::vector<double> meas, target;
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) {
            const auto ev = after(m * N + n);
            if (ev.empty()) {
                rep.missing_nodes.emplace_back(m, n);
                continue;
            }
            double sx = 0.0, sy = 0.0;
            for (double t : ev) {
                sx += std::cos(w * (t_ref - t));
                sy += std::sin(w * (t_ref - t));
            }
            const double lead = detail::wrap_period(std::atan2(sy, sx) / w, T);
            const double want = detail::wrap_period(eta(m, n) - eta(0, 0), T);
            rep.measured(m, n) = lead;
            rep.max_dev = std::max(rep.max_dev, detail::circular_distance(lead, want, T));
            meas.push_back(lead * w);
            target.push_back(want * w);
        }

    // Circular correlation coefficient about the circular means.
    auto cmean = [](const std::vector<double>& a) {
        double sx = 0.0, sy = 0.0;
        for (double x : a) {
            sx += std::cos(x);
            sy += std::sin(x);
        }
        return std::atan2(sy, sx);
    };
    if (meas.size() >= 2) {
        const double ma = cmean(meas), mb = cmean(target);
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t i = 0; i < meas.size(); ++i) {
            const double a = std::sin(meas[i] - ma), b = std::sin(target[i] - mb);
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        if (sbb > 1e-24 && saa > 0.0) {
            rep.correlation = sab / std::sqrt(saa * sbb);
            rep.correlation_defined = true;
        }
    }
    return rep;
}

}  // namespace dlattice
