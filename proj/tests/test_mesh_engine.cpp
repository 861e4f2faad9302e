#include "curvetlm/analysis.hpp"
#include "curvetlm/engine.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace curvetlm;

namespace {

std::array<double, 4> mat_vec(const Matrix4& s, const std::array<double, 4>& v) {
    std::array<double, 4> out{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) out[r] += s[r][c] * v[c];
    return out;
}

std::array<double, 4> reflected_at(const MeshGrid& m, int i, int j) {
    return {m.reflected(i, j, Port::South), m.reflected(i, j, Port::West), m.reflected(i, j, Port::North),
            m.reflected(i, j, Port::East)};
}

void set_incident(MeshGrid& m, int i, int j, const std::array<double, 4>& v) {
    for (int p = 0; p < 4; ++p) m.incident(i, j, static_cast<Port>(p)) = v[p];
}

}  // namespace

TEST(Scatter, MatricesAreOrthogonalAndInvolutive) {
    for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
        const auto s = scattering_matrix(kind);
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                double ss = 0.0;
                double sts = 0.0;
                for (int k = 0; k < 4; ++k) {
                    ss += s[r][k] * s[k][c];
                    sts += s[k][r] * s[k][c];
                }
                const double id = r == c ? 1.0 : 0.0;
                EXPECT_NEAR(ss, id, 1e-12);
                EXPECT_NEAR(sts, id, 1e-12);
                EXPECT_EQ(s[r][c], s[c][r]);
            }
        }
    }
}

TEST(Scatter, ShuntUnitPulse) {
    MeshGrid m(2, 2, 0.01, NodeKind::Shunt);
    set_incident(m, 0, 0, {1.0, 0.0, 0.0, 0.0});
    scatter(m);
    const auto r = reflected_at(m, 0, 0);
    EXPECT_DOUBLE_EQ(r[0], -0.5);
    EXPECT_DOUBLE_EQ(r[1], 0.5);
    EXPECT_DOUBLE_EQ(r[2], 0.5);
    EXPECT_DOUBLE_EQ(r[3], 0.5);
}

TEST(Scatter, SeriesEigenvectors) {
    MeshGrid m(2, 2, 0.01, NodeKind::Series);
    const std::array<double, 4> loop{1.0, 1.0, -1.0, -1.0};
    set_incident(m, 0, 0, loop);
    const std::array<double, 4> even{1.0, -1.0, 0.0, 0.0};
    set_incident(m, 1, 0, even);
    const std::array<double, 4> uniform{1.0, 1.0, 1.0, 1.0};
    set_incident(m, 0, 1, uniform);
    scatter(m);
    const auto a = reflected_at(m, 0, 0);
    const auto b = reflected_at(m, 1, 0);
    const auto c = reflected_at(m, 0, 1);
    for (int p = 0; p < 4; ++p) {
        EXPECT_DOUBLE_EQ(a[p], -loop[p]);
        EXPECT_DOUBLE_EQ(b[p], even[p]);
        EXPECT_DOUBLE_EQ(c[p], uniform[p]);
    }
}

TEST(Scatter, KernelMatchesMatrixAndZeroStaysZero) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
        MeshGrid m(3, 2, 0.01, kind);
        std::array<double, 4> v{u(rng), u(rng), u(rng), u(rng)};
        set_incident(m, 1, 1, v);
        scatter(m);
        const auto expected = mat_vec(scattering_matrix(kind), v);
        const auto got = reflected_at(m, 1, 1);
        for (int p = 0; p < 4; ++p) EXPECT_NEAR(got[p], expected[p], 1e-15);
        for (int p = 0; p < 4; ++p) EXPECT_EQ(reflected_at(m, 0, 0)[p], 0.0);
    }
}

TEST(Connect, PlainLinksSwapAcrossNeighbours) {
    MeshGrid m(3, 3, 0.01, NodeKind::Shunt);
    m.reflected(1, 1, Port::East) = 1.0;
    m.reflected(1, 1, Port::North) = 2.0;
    m.reflected(2, 1, Port::West) = 3.0;
    connect(m);
    EXPECT_EQ(m.incident(2, 1, Port::West), 1.0);
    EXPECT_EQ(m.incident(1, 2, Port::South), 2.0);
    EXPECT_EQ(m.incident(1, 1, Port::East), 3.0);
}

TEST(Connect, OuterEdgesApplyBoundaryCoefficients) {
    Boundaries b;
    b.edge[static_cast<int>(Edge::West)] = BoundaryKind::PEC;
    b.edge[static_cast<int>(Edge::East)] = BoundaryKind::Matched;
    MeshGrid m(2, 2, 0.01, NodeKind::Series, b);
    m.reflected(0, 0, Port::West) = 1.0;
    m.reflected(1, 0, Port::East) = 1.0;
    connect(m);
    EXPECT_EQ(m.incident(0, 0, Port::West), -1.0);
    EXPECT_EQ(m.incident(1, 0, Port::East), 0.0);
}

TEST(Connect, EveryReflectedVoltageIsConsumedOnce) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    MeshGrid m(5, 4, 0.01, NodeKind::Shunt, Boundaries::uniform(BoundaryKind::PEC));
    for (double& v : m.reflected_data()) v = u(rng);
    connect(m);
    std::vector<double> before(m.reflected_data().begin(), m.reflected_data().end());
    std::vector<double> after(m.incident_data().begin(), m.incident_data().end());
    for (double& v : before) v = std::abs(v);
    for (double& v : after) v = std::abs(v);
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    EXPECT_EQ(before, after);
}

TEST(Engine, EnergyIsConservedInClosedBox) {
    for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
        MeshGrid m(30, 20, 0.01, kind, Boundaries::uniform(BoundaryKind::PEC));
        CrossingSet none;
        inject(DeltaPoint{7, 5, 1.0, Impulse{}}, m, 0);
        inject(DeltaPoint{20, 13, -0.4, Impulse{}}, m, 0);
        scatter(m);
        connect(m, none);
        const double e0 = m.incident_energy();
        ASSERT_GT(e0, 0.0);
        for (int step = 0; step < 10000; ++step) {
            scatter(m);
            connect(m, none);
        }
        EXPECT_LT(std::abs(m.incident_energy() - e0) / e0, 1e-10);
    }
}

TEST(Engine, CoLocatedProbeSeesInjectedAmplitude) {
    for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
        MeshGrid m(10, 10, 0.01, kind);
        CrossingSet none;
        const auto rec = run(m, none, {DeltaPoint{4, 4, 2.5, Impulse{}}},
                             {Probe{"p", 4, 4, ProbeQuantity::NodeValue, {}}}, 3);
        ASSERT_EQ(rec.probes.front().samples.size(), 3u);
        EXPECT_DOUBLE_EQ(rec.probes.front().samples[0], 2.5);
        EXPECT_DOUBLE_EQ(rec.dt, time_step(0.01));
    }
}

TEST(Engine, TwoByTwoMeshByHand) {
    MeshGrid m(2, 2, 0.01, NodeKind::Shunt);
    CrossingSet none;
    (void)run(m, none, {DeltaPoint{0, 0, 1.0, Impulse{}}}, {}, 1);
    // Injection puts 0.5 on each port, scatter returns 0.5 on each, connect
    // passes the east and north waves on and the matched edges absorb the rest.
    EXPECT_DOUBLE_EQ(m.incident(1, 0, Port::West), 0.5);
    EXPECT_DOUBLE_EQ(m.incident(0, 1, Port::South), 0.5);
    EXPECT_DOUBLE_EQ(m.incident(0, 0, Port::South), 0.0);
    EXPECT_DOUBLE_EQ(m.incident(0, 0, Port::West), 0.0);
    EXPECT_DOUBLE_EQ(m.node_value(1, 0), 0.25);
    EXPECT_DOUBLE_EQ(m.node_value(1, 1), 0.0);
}

TEST(Engine, RunIsDeterministic) {
    auto once = [] {
        MeshGrid m(20, 12, 0.01, NodeKind::Series);
        const double dt = time_step(0.01);
        const LinkLine line{m.link_admittance(), m.link_speed()};
        std::vector<Crossing> cs;
        for (int j = 0; j < 12; ++j)
            cs.emplace_back(LinkId{10, j, LinkAxis::X}, 0.3, FilmMaterial{2.0, 1.0, 1e3, 0.0, 1e-3}, 24, 0.01, dt, line);
        CrossingSet set(m, std::move(cs));
        return run(m, set, {DeltaPoint{3, 6, 1.0, Impulse{}}}, {Probe{"p", 15, 6, ProbeQuantity::Field, {}}}, 300)
            .probes.front()
            .samples;
    };
    EXPECT_EQ(once(), once());
}

TEST(Engine, MidpointPecWallEqualsOuterBoundary) {
    // A column of PEC crossings at the link midpoint reflects exactly like a
    // PEC edge half a link beyond the last node.
    const double dl = 0.01;
    const int wall = 11;
    Boundaries truncated_bc = Boundaries::uniform(BoundaryKind::PEC);
    MeshGrid full(24, 10, dl, NodeKind::Shunt, Boundaries::uniform(BoundaryKind::PEC));
    MeshGrid truncated(wall + 1, 10, dl, NodeKind::Shunt, truncated_bc);
    const LinkLine line{full.link_admittance(), full.link_speed()};
    std::vector<Crossing> cs;
    for (int j = 0; j < 10; ++j) cs.emplace_back(LinkId{wall, j, LinkAxis::X}, 0.5, Pec{}, 24, dl, full.dt(), line);
    CrossingSet set(full, std::move(cs));
    CrossingSet none;
    const std::vector<Source> src{DeltaPoint{4, 3, 1.0, Impulse{}}};
    const auto a = run(full, set, src, {Probe{"p", 9, 7, ProbeQuantity::Field, {}}}, 500);
    const auto b = run(truncated, none, src, {Probe{"p", 9, 7, ProbeQuantity::Field, {}}}, 500);
    EXPECT_EQ(a.probes.front().samples, b.probes.front().samples);
}

TEST(Engine, CavityResonancesMatchAnalyticModes) {
    // Coarse desk check of the time-step convention: 0.2 m x 0.1 m PEC box at 5 mm.
    const double dl = 0.005;
    MeshGrid m(40, 20, dl, NodeKind::Shunt, Boundaries::uniform(BoundaryKind::PEC));
    CrossingSet none;
    const auto rec = run(m, none, {DeltaPoint{5, 3, 1.0, Impulse{}}}, {Probe{"p", 28, 13, ProbeQuantity::Field, {}}}, 16000);
    const auto s = spectrum(rec.probes.front().samples, rec.dt);
    ResonanceOptions opt;
    opt.n_peaks = 2;
    opt.selection = PeakSelection::Lowest;
    opt.f_min = 1e8;
    const auto peaks = find_resonances(s, opt);
    ASSERT_EQ(peaks.size(), 2u);
    const double c = constants::c0;
    EXPECT_NEAR(peaks[0].frequency, 0.5 * c * std::hypot(1 / 0.2, 1 / 0.1), 0.01 * 1.676e9);
    EXPECT_NEAR(peaks[1].frequency, 0.5 * c * std::hypot(2 / 0.2, 1 / 0.1), 0.01 * 2.12e9);
}

TEST(CrossingSet, RejectsOuterAndDuplicateLinks) {
    MeshGrid m(5, 5, 0.01, NodeKind::Series);
    const LinkLine line{m.link_admittance(), m.link_speed()};
    auto make = [&](LinkId id) { return Crossing(id, 0.5, Pec{}, 4, 0.01, m.dt(), line); };
    EXPECT_THROW(CrossingSet(m, {make({4, 2, LinkAxis::X})}), CrossingOnBoundary);
    EXPECT_THROW(CrossingSet(m, {make({2, 4, LinkAxis::Y})}), CrossingOnBoundary);
    EXPECT_THROW(CrossingSet(m, {make({1, 1, LinkAxis::X}), make({1, 1, LinkAxis::X})}), ConfigError);
    const CrossingSet ok(m, {make({1, 1, LinkAxis::X}), make({1, 1, LinkAxis::Y})});
    EXPECT_EQ(ok.owner(1, 1, LinkAxis::X), 0);
    EXPECT_EQ(ok.owner(1, 1, LinkAxis::Y), 1);
    EXPECT_EQ(ok.owner(2, 1, LinkAxis::X), -1);
}

TEST(CrossingSet, MismatchedMeshIsRejectedByRun) {
    MeshGrid m(5, 5, 0.01, NodeKind::Series);
    const LinkLine line{m.link_admittance(), m.link_speed()};
    CrossingSet set(m, {Crossing({1, 1, LinkAxis::X}, 0.5, Pec{}, 4, 0.01, m.dt(), line)});
    MeshGrid other(6, 5, 0.01, NodeKind::Series);
    EXPECT_THROW((void)run(other, set, {}, {}, 1), ConfigError);
}

TEST(Engine, InvalidArgumentsAreConfigErrors) {
    EXPECT_THROW(MeshGrid(1, 5, 0.01, NodeKind::Shunt), ConfigError);
    EXPECT_THROW(MeshGrid(5, 5, 0.0, NodeKind::Shunt), ConfigError);
    MeshGrid m(5, 5, 0.01, NodeKind::Shunt);
    CrossingSet none;
    EXPECT_THROW((void)run(m, none, {}, {}, 0), ConfigError);
    EXPECT_THROW((void)run(m, none, {DeltaPoint{9, 0, 1.0, Impulse{}}}, {}, 1), ConfigError);
    EXPECT_THROW((void)run(m, none, {}, {Probe{"p", 0, 9, ProbeQuantity::Field, {}}}, 1), ConfigError);
}
