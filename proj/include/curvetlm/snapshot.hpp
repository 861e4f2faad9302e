#pragma once

// Whole-grid field snapshots.

#include "curvetlm/errors.hpp"
#include "curvetlm/excitation.hpp"
#include "curvetlm/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

namespace curvetlm {

/// Values are row-major with x fastest: value(i, j) = values[j * nx + i].
/// Node (i, j) sits at (origin_x + i*dl, origin_y + j*dl).
struct SnapshotGrid {
    long step = 0;
    int nx = 0;
    int ny = 0;
    double dl = 0.0;
    double origin_x = 0.0;
    double origin_y = 0.0;
    bool db = false;
    std::vector<double> values;

    [[nodiscard]] double value(int i, int j) const noexcept {
        return values[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)];
    }
};

/// Lowest level written by a dB snapshot.
inline constexpr double snapshot_floor_db = -120.0;

/// The chosen quantity at every node, taken after the scatter phase.
[[nodiscard]] inline SnapshotGrid take_snapshot(const MeshGrid& mesh, long step,
                                                ProbeQuantity quantity = ProbeQuantity::Field) {
    SnapshotGrid g;
    g.step = step;
    g.nx = mesh.nx();
    g.ny = mesh.ny();
    g.dl = mesh.dl();
    g.values.resize(static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny));
    Probe p{"snapshot", 0, 0, quantity, {}};
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            p.i = i;
            p.j = j;
            g.values[static_cast<std::size_t>(j) * static_cast<std::size_t>(g.nx) + static_cast<std::size_t>(i)] =
                probe_value(p, mesh);
        }
    }
    return g;
}

/// 20 log10(|v| / max|v|), floored at -120 dB. An all-zero grid maps to the floor.
[[nodiscard]] inline SnapshotGrid to_db(const SnapshotGrid& g) {
    SnapshotGrid out = g;
    out.db = true;
    double peak = 0.0;
    for (double v : g.values) peak = std::max(peak, std::abs(v));
    for (double& v : out.values) {
        const double r = peak > 0.0 ? std::abs(v) / peak : 0.0;
        v = r > 0.0 ? std::max(20.0 * std::log10(r), snapshot_floor_db) : snapshot_floor_db;
    }
    return out;
}

/// CSV with one row per y index and one column per x index.
inline void write_snapshot_csv(std::ostream& os, const SnapshotGrid& g) {
    os.precision(12);
    os << "# step=" << g.step << " nx=" << g.nx << " ny=" << g.ny << " dl=" << g.dl << " origin=" << g.origin_x << ','
       << g.origin_y << " scale=" << (g.db ? "dB" : "linear") << '\n';
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            if (i) os << ',';
            os << g.value(i, j);
        }
        os << '\n';
    }
}

inline constexpr std::array<char, 8> snapshot_magic{'C', 'T', 'L', 'M', 'S', 'N', 'P', '1'};

/// 16-byte header (8-byte magic, int32 nx, int32 ny) followed by nx*ny
/// native-endian doubles, row-major with x fastest.
inline void write_snapshot_binary(std::ostream& os, const SnapshotGrid& g) {
    const auto nx = static_cast<std::int32_t>(g.nx);
    const auto ny = static_cast<std::int32_t>(g.ny);
    os.write(snapshot_magic.data(), snapshot_magic.size());
    os.write(reinterpret_cast<const char*>(&nx), sizeof nx);
    os.write(reinterpret_cast<const char*>(&ny), sizeof ny);
    os.write(reinterpret_cast<const char*>(g.values.data()),
             static_cast<std::streamsize>(g.values.size() * sizeof(double)));
}

[[nodiscard]] inline SnapshotGrid read_snapshot_binary(std::istream& is) {
    std::array<char, 8> magic{};
    std::int32_t nx = 0;
    std::int32_t ny = 0;
    is.read(magic.data(), magic.size());
    is.read(reinterpret_cast<char*>(&nx), sizeof nx);
    is.read(reinterpret_cast<char*>(&ny), sizeof ny);
    if (!is || magic != snapshot_magic || nx <= 0 || ny <= 0) throw Error("not a snapshot file");
    SnapshotGrid g;
    g.nx = nx;
    g.ny = ny;
    g.values.resize(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    is.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    if (!is) throw Error("truncated snapshot file");
    return g;
}

}  // namespace curvetlm
