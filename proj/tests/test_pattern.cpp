#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "dlattice/dde.hpp"
#include "dlattice/io.hpp"
#include "dlattice/pattern.hpp"

using namespace dlattice;

namespace {

FhnSteadyState rest_state(const FhnParams& p, double C) { return fhn_steady_states(p, C).front(); }

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("dlattice_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Synchronized FHN orbit on a homogeneous lattice, densely recorded from a
// single node after the transient.
struct SyncOrbit {
    Trajectory tr;
    double period = 0.0;
};

SyncOrbit sync_fhn(int M, int N, double C, double current, double tau, double t_end, double dense_from) {
    FhnParams p;
    p.current = current;
    LatticeSpec spec{M, N, p, C};
    SimOptions opt;
    opt.t_end = t_end;
    opt.record_every = 50;
    opt.dense_from = dense_from;
    opt.dense_node = 0;
    SyncOrbit s;
    s.tr = simulate(spec, DelayMap::homogeneous(M, N, tau), kick_history(rest_state(p, C), 0.8, 3.0), opt);
    s.period = estimate_period(s.tr, dense_from).period;
    return s;
}

}  // namespace

TEST(Delays, ZeroAndConstantShiftsGiveBaseDelay) {
    ShiftField z(3, 4, 0.0), c(3, 4, 7.25);
    EXPECT_EQ(delays_from_timeshifts(z, 20.0), DelayMap::homogeneous(3, 4, 20.0));
    EXPECT_EQ(delays_from_timeshifts(c, 20.0), DelayMap::homogeneous(3, 4, 20.0));
}

TEST(Delays, RingWrapEdge) {
    const int N = 9;
    ShiftField eta(1, N);
    for (int n = 0; n < N; ++n) eta(0, n) = 0.1 * n;
    auto d = delays_from_timeshifts(eta, 20.0);
    for (int n = 1; n < N; ++n) EXPECT_NEAR(d.right(0, n), 19.9, 1e-12);
    EXPECT_NEAR(d.right(0, 0), 19.9 + 0.1 * N, 1e-12);
    for (int n = 0; n < N; ++n) EXPECT_DOUBLE_EQ(d.down(0, n), 20.0);
}

TEST(Delays, GaugeInvariance) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    ShiftField eta(5, 7);
    for (auto& x : eta.data()) x = u(rng);
    auto base = delays_from_timeshifts(eta, 20.0);
    for (double c : {0.5, -2.0, 1.0 / 3.0, 1e3}) {
        ShiftField shifted = eta;
        for (auto& x : shifted.data()) x += c;
        auto d = delays_from_timeshifts(shifted, 20.0);
        for (int m = 0; m < 5; ++m)
            for (int n = 0; n < 7; ++n) {
                EXPECT_NEAR(d.down(m, n), base.down(m, n), 1e-12 * std::max(1.0, std::abs(c)));
                EXPECT_NEAR(d.right(m, n), base.right(m, n), 1e-12 * std::max(1.0, std::abs(c)));
            }
    }
    // Dyadic shifts cancel without rounding.
    ShiftField dy(5, 7);
    for (int i = 0; i < 35; ++i) dy.data()[i] = (i % 11) * 0.125;
    auto a = delays_from_timeshifts(dy, 20.0);
    for (auto& x : dy.data()) x += 4.0;
    EXPECT_EQ(delays_from_timeshifts(dy, 20.0), a);
}

TEST(Delays, LoopSumsTelescope) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    const int M = 6, N = 8;
    const double tau = 30.0;
    ShiftField eta(M, N);
    for (auto& x : eta.data()) x = u(rng);
    auto d = delays_from_timeshifts(eta, tau);
    for (int m = 0; m < M; ++m) {
        double s = 0.0;
        for (int n = 0; n < N; ++n) s += d.right(m, n);
        EXPECT_NEAR(s, N * tau, 1e-11);
    }
    for (int n = 0; n < N; ++n) {
        double s = 0.0;
        for (int m = 0; m < M; ++m) s += d.down(m, n);
        EXPECT_NEAR(s, M * tau, 1e-11);
    }
}

TEST(Delays, NonpositiveDelaysAreListed) {
    ShiftField eta(2, 3, 0.0);
    eta(1, 1) = 25.0;
    try {
        delays_from_timeshifts(eta, 20.0);
        FAIL();
    } catch (const DomainError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("down(1,1)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("right(1,1)"), std::string::npos) << msg;
    }
    EXPECT_THROW(delays_from_timeshifts(ShiftField(2, 2), 0.0), DomainError);
}

TEST(Pgm, ReadsAsciiWithComments) {
    std::istringstream in("P2\n# comment\n3 2\n# another\n255\n0 128 255\n10 20 30\n");
    auto img = read_pgm(in);
    EXPECT_EQ(img.rows, 2);
    EXPECT_EQ(img.cols, 3);
    EXPECT_EQ(img.at(0, 1), 128);
    EXPECT_EQ(img.at(1, 2), 30);
}

TEST(Pgm, BinaryRoundTrip) {
    GrayImage img{4, 5, 255, {}};
    for (int i = 0; i < 20; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 13));
    img.pixels[3] = 10;  // byte that reads as whitespace must survive
    img.pixels[0] = 32;
    std::stringstream s;
    write_pgm(s, img);
    auto back = read_pgm(s);
    EXPECT_EQ(back.rows, 4);
    EXPECT_EQ(back.cols, 5);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Pgm, RejectsUnsupportedInput) {
    std::istringstream deep("P5\n2 2\n65535\n");
    EXPECT_THROW(read_pgm(deep), FormatError);
    std::istringstream magic("P6\n2 2\n255\n");
    EXPECT_THROW(read_pgm(magic), FormatError);
    std::istringstream trunc("P5\n2 2\n255\nab");
    EXPECT_THROW(read_pgm(trunc), FormatError);
    std::istringstream big("P2\n1 1\n15\n16\n");
    EXPECT_THROW(read_pgm(big), FormatError);
    EXPECT_THROW(read_pgm(std::string("/nonexistent/x.pgm")), FormatError);
}

TEST(EtaFromImage, LinearMap) {
    GrayImage img{2, 2, 255, {0, 255, 128, 0}};
    auto eta = eta_from_image(img, 1.0, 3.0);
    EXPECT_DOUBLE_EQ(eta(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(eta(0, 1), 3.0);
    EXPECT_DOUBLE_EQ(eta(1, 0), 1.0 + 128.0 / 255.0 * 2.0);
    GrayImage black{3, 3, 255, std::vector<std::uint8_t>(9, 0)}, white{3, 3, 255, std::vector<std::uint8_t>(9, 255)};
    const auto lo = eta_from_image(black, -0.5, 0.5), hi = eta_from_image(white, -0.5, 0.5);
    for (double x : lo.data()) EXPECT_EQ(x, -0.5);
    for (double x : hi.data()) EXPECT_EQ(x, 0.5);
    EXPECT_THROW(eta_from_image(img, 0.0, 1.0, 3, 2), DomainError);
    EXPECT_THROW(eta_from_image(img, 2.0, 1.0), DomainError);
}

TEST(VerifyPattern, SyntheticSpikes) {
    const int M = 3, N = 4;
    const double T = 10.0;
    ShiftField eta(M, N);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) eta(m, n) = 0.3 * m + 0.7 * n;
    std::vector<std::vector<double>> spikes(M * N);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < 5; ++k) spikes[m * N + n].push_back(100.0 + k * T - eta(m, n));
    auto rep = verify_pattern(spikes, eta, T, 50.0);
    EXPECT_TRUE(rep.correlation_defined);
    EXPECT_NEAR(rep.correlation, 1.0, 1e-12);
    EXPECT_LT(rep.max_dev, 1e-9);
    EXPECT_TRUE(rep.missing_nodes.empty());

    // Opposite sign convention anticorrelates.
    ShiftField neg = eta;
    for (auto& x : neg.data()) x = -x;
    EXPECT_LT(verify_pattern(spikes, neg, T, 50.0).correlation, -0.99);

    spikes[5].clear();
    rep = verify_pattern(spikes, eta, T, 50.0);
    ASSERT_EQ(rep.missing_nodes.size(), 1u);
    EXPECT_EQ(rep.missing_nodes[0], std::make_pair(1, 1));
    auto j = rep.to_json();
    EXPECT_EQ(j["missing_nodes"][0][0], 1);

    ShiftField flat(M, N, 2.0);
    auto fr = verify_pattern(spikes, flat, T, 50.0);
    EXPECT_FALSE(fr.correlation_defined);
    EXPECT_TRUE(j.contains("max_dev"));
    EXPECT_TRUE(fr.to_json()["correlation"].is_null());
}

TEST(VerifyPattern, SynchronizedOrbitHasNoOffsets) {
    auto s = sync_fhn(3, 3, 3.0, 0.0, 20.0, 400.0, 200.0);
    auto rep = verify_pattern(s.tr.spikes, ShiftField(3, 3, 0.0), s.period, 200.0);
    EXPECT_LT(rep.max_dev, 2 * s.tr.dt);
    EXPECT_TRUE(rep.missing_nodes.empty());
}

TEST(VerifyPattern, TwoClusterField) {
    const int M = 4, N = 4;
    const double C = 3.0, tau = 50.0;
    auto base = sync_fhn(M, N, C, 0.0, tau, 700.0, 400.0);
    const double T = base.period;
    ASSERT_LT(T / 2, tau);
    ShiftField eta(M, N);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) eta(m, n) = ((m + n) % 2) * T / 2;
    auto delays = delays_from_timeshifts(eta, tau);

    FhnParams p;
    LatticeSpec spec{M, N, p, C};
    SimOptions opt;
    opt.t_end = 10 * T;
    opt.record_every = 100;
    const double t_ref = base.tr.dense.t_first() + history_span(delays, base.tr.dt);
    auto tr = simulate(spec, delays, shifted_history(base.tr.dense, eta, t_ref), opt);
    auto rep = verify_pattern(tr.spikes, eta, T, 5 * T);
    EXPECT_TRUE(rep.missing_nodes.empty());
    EXPECT_LT(rep.max_dev, 0.01 * T);
    EXPECT_GT(rep.correlation, 0.99);
}

namespace {

// Runs the homogeneous lattice, then the transformed lattice from the shifted
// history, and returns max |v_{m,n}(t) - u_{m,n}(t_ref + t + eta_{m,n})|.
double conjugacy_error(const LatticeSpec& spec, double tau, const HistoryInit& start, const ShiftField& eta,
                       double t_ref, double span) {
    const double eta_max = *std::max_element(eta.data().begin(), eta.data().end());
    const double eta_min = *std::min_element(eta.data().begin(), eta.data().end());
    auto delays = delays_from_timeshifts(eta, tau);
    SimOptions base;
    base.t_end = t_ref + span + eta_max + 1.0;
    base.record_every = 1000;
    base.dense_from = t_ref - history_span(delays, 0.01) + eta_min - 0.05;
    auto hom = simulate(spec, DelayMap::homogeneous(spec.rows, spec.cols, tau), start, base);

    SimOptions opt;
    opt.t_end = span;
    opt.record_every = 7;
    auto tr = simulate(spec, delays, shifted_history(hom.dense, eta, t_ref), opt);
    double worst = 0.0;
    std::vector<double> u(tr.dim);
    for (std::size_t k = 0; k < tr.frame_count(); ++k)
        for (int m = 0; m < spec.rows; ++m)
            for (int n = 0; n < spec.cols; ++n) {
                hom.dense.eval(m * spec.cols + n, t_ref + tr.times[k] + eta(m, n), u.data(), nullptr);
                for (int c = 0; c < tr.dim; ++c) worst = std::max(worst, std::abs(tr.value(k, m, n, c) - u[c]));
            }
    return worst;
}

}  // namespace

TEST(ShiftEquivalence, StuartLandau2x2) {
    LatticeSpec spec{2, 2, SlParams{1.0, 0.5}, 1.0};
    ShiftField eta(2, 2);
    eta(0, 1) = 0.37;
    eta(1, 0) = 1.13;
    eta(1, 1) = -0.58;
    double err = conjugacy_error(spec, 5.0, random_history({0.0, 0.0}, 0.5, 2, 2, 1), eta, 60.0, 40.0);
    EXPECT_LT(err, 1e-8);
}

TEST(ShiftEquivalence, FitzHughNagumo4x4) {
    FhnParams p;
    LatticeSpec spec{4, 4, p, 3.0};
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    ShiftField eta(4, 4);
    for (auto& x : eta.data()) x = u(rng);
    auto start = random_history({-1.0, -0.5, 0.0}, 0.5, 4, 4, 3);
    double err = conjugacy_error(spec, 20.0, start, eta, 100.0, 150.0);
    EXPECT_LT(err, 1e-6);
}

TEST(Io, MatrixCsvRoundTrip) {
    Grid2<double> g(2, 3);
    g(0, 0) = 0.1;
    g(0, 2) = -1e-300;
    g(1, 1) = 1.0 / 3.0;
    std::stringstream s;
    write_matrix_csv(s, g);
    EXPECT_EQ(read_matrix_csv(s), g);
    std::istringstream ragged("1,2\n3\n");
    EXPECT_THROW(read_matrix_csv(ragged), FormatError);
    std::istringstream junk("1,x\n");
    EXPECT_THROW(read_matrix_csv(junk), FormatError);
}

TEST(Io, FramesAndSpikesRoundTrip) {
    auto dir = temp_dir("io");
    LatticeSpec spec{2, 3, SlParams{1.0, 0.5}, 1.0};
    SimOptions opt;
    opt.t_end = 30.0;
    opt.record_every = 20;
    auto tr = simulate(spec, DelayMap::homogeneous(2, 3, 2.0), random_history({0.0, 0.0}, 0.3, 2, 3, 8), opt);
    write_frames_raw((dir / "f.bin").string(), (dir / "f.json").string(), tr);
    auto back = read_frames_raw((dir / "f.bin").string(), (dir / "f.json").string());
    EXPECT_EQ(back.frames, tr.frames);
    ASSERT_EQ(back.times.size(), tr.times.size());
    for (std::size_t k = 0; k < tr.times.size(); ++k) EXPECT_NEAR(back.times[k], tr.times[k], 1e-9);
    EXPECT_EQ(std::filesystem::file_size(dir / "f.bin"), tr.frames.size() * 8);

    write_spikes_csv((dir / "s.csv").string(), tr.spikes, 3);
    EXPECT_EQ(read_spikes_csv((dir / "s.csv").string(), 2, 3), tr.spikes);

    std::ostringstream a, b;
    write_frames_csv(a, tr);
    write_frames_csv(b, tr);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(a.str().substr(0, 14), "t,m,n,c0,c1\n0,");

    auto delays = DelayMap::homogeneous(2, 3, 2.0);
    delays.right(1, 2) = 2.5;
    write_delay_map((dir / "d.csv").string(), (dir / "r.csv").string(), delays);
    EXPECT_EQ(read_delay_map((dir / "d.csv").string(), (dir / "r.csv").string()), delays);
    std::filesystem::remove_all(dir);
}

TEST(Io, Fmt17RoundTrips) {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-310, 6.02214076e23}) EXPECT_EQ(std::strtod(fmt17(x).c_str(), nullptr), x);
}
