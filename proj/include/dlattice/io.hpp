#pragma once

// File formats. All text output uses %.17g so that values round-trip and
// repeated runs produce byte-identical files.
//
//   matrix CSV      one lattice row per line, comma separated
//   frames CSV      header "t,m,n,c0,...", one line per node per frame
//   raw frames      little-endian float64 [frame][m][n][component], plus a
//                   JSON sidecar {M, N, d, dt, record_every, t0, frames, dtype}
//   spikes CSV      header "m,n,t"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlattice/core.hpp"
#include "dlattice/dde.hpp"
#include "dlattice/error.hpp"

namespace dlattice {

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw FormatError("cannot write '" + path + "'");
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
    if (end == begin || *end != '\0') throw FormatError(where + ": not a number '" + s + "'");
    return v;
}

}  // namespace detail

inline void write_matrix_csv(std::ostream& out, const Grid2<double>& g) {
    for (int m = 0; m < g.rows(); ++m) {
        for (int n = 0; n < g.cols(); ++n) out << (n ? "," : "") << fmt17(g(m, n));
        out << '\n';
    }
}

inline void write_matrix_csv(const std::string& path, const Grid2<double>& g) {
    auto out = detail::open_out(path);
    write_matrix_csv(out, g);
}

inline Grid2<double> read_matrix_csv(std::istream& in, const std::string& name = "matrix") {
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(detail::parse_double(cell, name + ":" + std::to_string(lineno)));
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError(name + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().empty()) throw FormatError(name + ": empty matrix");
    Grid2<double> g(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int m = 0; m < g.rows(); ++m)
        for (int n = 0; n < g.cols(); ++n) g(m, n) = rows[m][n];
    return g;
}

inline Grid2<double> read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return read_matrix_csv(in, path);
}

inline DelayMap read_delay_map(const std::string& down_path, const std::string& right_path) {
    DelayMap d{read_matrix_csv(down_path), read_matrix_csv(right_path)};
    d.validate();
    return d;
}

inline void write_delay_map(const std::string& down_path, const std::string& right_path, const DelayMap& d) {
    write_matrix_csv(down_path, d.down);
    write_matrix_csv(right_path, d.right);
}

inline void write_frames_csv(std::ostream& out, const Trajectory& tr) {
    out << "t,m,n";
    for (int c = 0; c < tr.dim; ++c) out << ",c" << c;
    out << '\n';
    for (std::size_t k = 0; k < tr.frame_count(); ++k)
        for (int m = 0; m < tr.rows; ++m)
            for (int n = 0; n < tr.cols; ++n) {
                out << fmt17(tr.times[k]) << ',' << m << ',' << n;
                for (int c = 0; c < tr.dim; ++c) out << ',' << fmt17(tr.value(k, m, n, c));
                out << '\n';
            }
}

inline void write_frames_csv(const std::string& path, const Trajectory& tr) {
    auto out = detail::open_out(path);
    write_frames_csv(out, tr);
}

inline nlohmann::json frames_header(const Trajectory& tr) {
    return {{"M", tr.rows},
            {"N", tr.cols},
            {"d", tr.dim},
            {"dt", tr.dt},
            {"record_every", tr.record_every},
            {"t0", tr.times.empty() ? 0.0 : tr.times.front()},
            {"frames", tr.frame_count()},
            {"dtype", "float64-le"}};
}

inline void write_frames_raw(const std::string& bin_path, const std::string& json_path, const Trajectory& tr) {
    static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
    auto out = detail::open_out(bin_path, true);
    for (double x : tr.frames) {
        auto bits = std::bit_cast<std::uint64_t>(x);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        char b[8];
        std::memcpy(b, &bits, 8);
        out.write(b, 8);
    }
    auto js = detail::open_out(json_path);
    js << frames_header(tr).dump(2) << '\n';
}

/// Reads raw frames back; `times` are reconstructed from the sidecar.
inline Trajectory read_frames_raw(const std::string& bin_path, const std::string& json_path) {
    std::ifstream js(json_path);
    if (!js) throw FormatError("cannot open '" + json_path + "'");
    nlohmann::json h;
    try {
        js >> h;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path + ": " + e.what());
    }
    Trajectory tr;
    try {
        tr.rows = h.at("M");
        tr.cols = h.at("N");
        tr.dim = h.at("d");
        tr.dt = h.at("dt");
        tr.record_every = h.at("record_every");
        const double t0 = h.at("t0");
        const std::size_t frames = h.at("frames");
        if (h.at("dtype") != "float64-le") throw FormatError(json_path + ": unsupported dtype");
        for (std::size_t k = 0; k < frames; ++k) tr.times.push_back(t0 + static_cast<double>(k * tr.record_every) * tr.dt);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path + ": " + e.what());
    }
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + bin_path + "'");
    tr.frames.resize(tr.frame_count() * tr.frame_size());
    for (double& x : tr.frames) {
        char b[8];
        if (!in.read(b, 8)) throw FormatError(bin_path + ": truncated frame data");
        std::uint64_t bits;
        std::memcpy(&bits, b, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        x = std::bit_cast<double>(bits);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(bin_path + ": trailing bytes");
    return tr;
}

inline void write_spikes_csv(std::ostream& out, const std::vector<std::vector<double>>& spikes, int cols) {
    out << "m,n,t\n";
    for (std::size_t i = 0; i < spikes.size(); ++i)
        for (double t : spikes[i]) out << i / cols << ',' << i % cols << ',' << fmt17(t) << '\n';
}

inline void write_spikes_csv(const std::string& path, const std::vector<std::vector<double>>& spikes, int cols) {
    auto out = detail::open_out(path);
    write_spikes_csv(out, spikes, cols);
}

/// Reads a spikes CSV into per-node event lists (row-major, rows x cols).
inline std::vector<std::vector<double>> read_spikes_csv(const std::string& path, int rows, int cols) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::vector<std::vector<double>> out(static_cast<std::size_t>(rows) * cols);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            if (line != "m,n,t") throw FormatError(path + ": expected header 'm,n,t'");
            continue;
        }
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected m,n,t");
        const std::string where = path + ":" + std::to_string(lineno);
        const double m = detail::parse_double(a, where), n = detail::parse_double(b, where);
        if (m != std::floor(m) || n != std::floor(n) || m < 0 || n < 0 || m >= rows || n >= cols)
            throw FormatError(where + ": node index out of range");
        out[static_cast<std::size_t>(m) * cols + static_cast<std::size_t>(n)].push_back(detail::parse_double(c, where));
    }
    return out;
}

}  // namespace dlattice
