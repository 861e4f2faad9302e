#pragma once

// Structured 2D TLM mesh: node storage and the scatter phase.
//
// Port map (used everywhere in the library):
//
//   port 1 = South (-y)    port 2 = West (-x)
//   port 3 = North (+y)    port 4 = East (+x)
//
// An x-directed link joins port 4 (East) of node (i, j) to port 2 (West) of
// node (i+1, j); a y-directed link joins port 3 (North) of (i, j) to port 1
// (South) of (i, j+1). Node (i, j) sits at (i*dl, j*dl); the outer boundary is
// half a link beyond the edge nodes, so an Nx x Ny mesh covers Nx*dl x Ny*dl.

#include "curvetlm/constants.hpp"
#include "curvetlm/errors.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace curvetlm {

enum class NodeKind { Series, Shunt };

enum class BoundaryKind { Matched, PEC };

enum class Port : int { South = 0, West = 1, North = 2, East = 3 };

enum class Edge : int { West = 0, East = 1, South = 2, North = 3 };

inline constexpr std::array<Port, 4> all_ports{Port::South, Port::West, Port::North, Port::East};

/// Reflection coefficient applied on an outer link termination.
[[nodiscard]] constexpr double reflection_coefficient(BoundaryKind b) noexcept {
    return b == BoundaryKind::PEC ? -1.0 : 0.0;
}

/// Sign pattern of the series-node loop: opposite ports carry opposite signs.
inline constexpr std::array<double, 4> series_loop_signs{1.0, 1.0, -1.0, -1.0};

using Matrix4 = std::array<std::array<double, 4>, 4>;

/// Lossless 4-port scattering matrix of the chosen node kind.
///   Shunt:  S = J/2 - I
///   Series: S = I - s s^T / 2, s = series_loop_signs
[[nodiscard]] inline Matrix4 scattering_matrix(NodeKind kind) noexcept {
    Matrix4 s{};
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            if (kind == NodeKind::Shunt) {
                s[r][c] = 0.5 - (r == c ? 1.0 : 0.0);
            } else {
                s[r][c] = (r == c ? 1.0 : 0.0) - 0.5 * series_loop_signs[r] * series_loop_signs[c];
            }
        }
    }
    return s;
}

/// Link characteristic impedance: Z0/sqrt(2) for series nodes, sqrt(2)*Z0 for shunt nodes.
[[nodiscard]] inline double link_impedance(NodeKind kind) noexcept {
    return kind == NodeKind::Series ? constants::z0 / constants::sqrt2 : constants::sqrt2 * constants::z0;
}

/// Time step of a 2D mesh with cell size dl: dl / (sqrt(2) c0).
[[nodiscard]] inline double time_step(double dl) noexcept { return dl / (constants::sqrt2 * constants::c0); }

struct Boundaries {
    std::array<BoundaryKind, 4> edge{BoundaryKind::Matched, BoundaryKind::Matched, BoundaryKind::Matched,
                                     BoundaryKind::Matched};

    [[nodiscard]] BoundaryKind operator[](Edge e) const noexcept { return edge[static_cast<int>(e)]; }

    static Boundaries uniform(BoundaryKind b) noexcept { return Boundaries{{b, b, b, b}}; }
};

class MeshGrid {
public:
    MeshGrid(int nx, int ny, double dl, NodeKind kind, Boundaries boundaries = {})
        : nx_(nx), ny_(ny), dl_(dl), kind_(kind), boundaries_(boundaries) {
        if (nx < 2 || ny < 2) {
            throw ConfigError("mesh", "need at least 2x2 nodes, got " + std::to_string(nx) + "x" + std::to_string(ny));
        }
        if (!(dl > 0.0)) {
            throw ConfigError("mesh.dl", "cell size must be positive");
        }
        const auto n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * 4;
        incident_.assign(n, 0.0);
        reflected_.assign(n, 0.0);
    }

    [[nodiscard]] int nx() const noexcept { return nx_; }
    [[nodiscard]] int ny() const noexcept { return ny_; }
    [[nodiscard]] double dl() const noexcept { return dl_; }
    [[nodiscard]] double dt() const noexcept { return time_step(dl_); }
    [[nodiscard]] NodeKind kind() const noexcept { return kind_; }
    [[nodiscard]] const Boundaries& boundaries() const noexcept { return boundaries_; }
    [[nodiscard]] double link_impedance() const noexcept { return curvetlm::link_impedance(kind_); }
    [[nodiscard]] double link_admittance() const noexcept { return 1.0 / link_impedance(); }
    /// Propagation speed along a link: dl / dt.
    [[nodiscard]] double link_speed() const noexcept { return constants::sqrt2 * constants::c0; }

    [[nodiscard]] double x(int i) const noexcept { return i * dl_; }
    [[nodiscard]] double y(int j) const noexcept { return j * dl_; }

    [[nodiscard]] bool contains(int i, int j) const noexcept { return i >= 0 && j >= 0 && i < nx_ && j < ny_; }

    [[nodiscard]] std::size_t index(int i, int j, Port p) const noexcept {
        return (static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(i)) * 4 +
               static_cast<std::size_t>(p);
    }

    [[nodiscard]] double& incident(int i, int j, Port p) noexcept { return incident_[index(i, j, p)]; }
    [[nodiscard]] double incident(int i, int j, Port p) const noexcept { return incident_[index(i, j, p)]; }
    [[nodiscard]] double& reflected(int i, int j, Port p) noexcept { return reflected_[index(i, j, p)]; }
    [[nodiscard]] double reflected(int i, int j, Port p) const noexcept { return reflected_[index(i, j, p)]; }

    [[nodiscard]] std::span<double> incident_data() noexcept { return incident_; }
    [[nodiscard]] std::span<const double> incident_data() const noexcept { return incident_; }
    [[nodiscard]] std::span<double> reflected_data() noexcept { return reflected_; }
    [[nodiscard]] std::span<const double> reflected_data() const noexcept { return reflected_; }

    /// Node quantity from the incident voltages.
    /// Shunt: total node voltage V = (1/2) sum V^i.
    /// Series: loop voltage (1/2) s^T V^i, proportional to the loop current.
    [[nodiscard]] double node_value(int i, int j) const noexcept {
        const double* v = &incident_[index(i, j, Port::South)];
        if (kind_ == NodeKind::Shunt) {
            return 0.5 * (v[0] + v[1] + v[2] + v[3]);
        }
        return 0.5 * (series_loop_signs[0] * v[0] + series_loop_signs[1] * v[1] + series_loop_signs[2] * v[2] +
                      series_loop_signs[3] * v[3]);
    }

    /// Field mapped from the node value: E = -V/dl for shunt nodes, loop voltage/dl for series nodes.
    [[nodiscard]] double field(int i, int j) const noexcept {
        return kind_ == NodeKind::Shunt ? -node_value(i, j) / dl_ : node_value(i, j) / dl_;
    }

    /// Sum of squared incident voltages over every port of every node.
    [[nodiscard]] double incident_energy() const noexcept {
        double e = 0.0;
        for (double v : incident_) e += v * v;
        return e;
    }

    void clear() noexcept {
        std::fill(incident_.begin(), incident_.end(), 0.0);
        std::fill(reflected_.begin(), reflected_.end(), 0.0);
    }

private:
    int nx_;
    int ny_;
    double dl_;
    NodeKind kind_;
    Boundaries boundaries_;
    std::vector<double> incident_;
    std::vector<double> reflected_;
};

/// Scatter phase: V^r = S V^i at every node.
inline void scatter(MeshGrid& mesh) noexcept {
    auto vi = mesh.incident_data();
    auto vr = mesh.reflected_data();
    const std::size_t n = vi.size();
    if (mesh.kind() == NodeKind::Shunt) {
        for (std::size_t k = 0; k < n; k += 4) {
            const double t = 0.5 * (vi[k] + vi[k + 1] + vi[k + 2] + vi[k + 3]);
            vr[k] = t - vi[k];
            vr[k + 1] = t - vi[k + 1];
            vr[k + 2] = t - vi[k + 2];
            vr[k + 3] = t - vi[k + 3];
        }
    } else {
        // s = (+1, +1, -1, -1)
        for (std::size_t k = 0; k < n; k += 4) {
            const double t = 0.5 * (vi[k] + vi[k + 1] - vi[k + 2] - vi[k + 3]);
            vr[k] = vi[k] - t;
            vr[k + 1] = vi[k + 1] - t;
            vr[k + 2] = vi[k + 2] + t;
            vr[k + 3] = vi[k + 3] + t;
        }
    }
}

}  // namespace curvetlm
