#pragma once

// Connect phase and the time loop.

#include "curvetlm/crossing.hpp"
#include "curvetlm/errors.hpp"
#include "curvetlm/excitation.hpp"
#include "curvetlm/mesh.hpp"

#include <functional>
#include <vector>

namespace curvetlm {

/// Connect phase: reflected voltages become the incident voltages of the next
/// step. Plain links swap, crossing links go through their panel model, outer
/// links reflect with the edge's boundary coefficient. Reads only V^r and
/// writes only V^i, so the visiting order does not matter.
inline void connect(MeshGrid& mesh, CrossingSet& crossings) {
    const int nx = mesh.nx();
    const int ny = mesh.ny();
    auto vi = mesh.incident_data();
    auto vr = mesh.reflected_data();
    auto& list = crossings.crossings();

    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            if (i + 1 < nx) {
                const std::size_t lo = mesh.index(i, j, Port::East);
                const std::size_t hi = mesh.index(i + 1, j, Port::West);
                const int k = crossings.owner(i, j, LinkAxis::X);
                if (k < 0) {
                    vi[hi] = vr[lo];
                    vi[lo] = vr[hi];
                } else {
                    const auto [a, b] = list[static_cast<std::size_t>(k)].step(vr[lo], vr[hi]);
                    vi[lo] = a;
                    vi[hi] = b;
                }
            }
            if (j + 1 < ny) {
                const std::size_t lo = mesh.index(i, j, Port::North);
                const std::size_t hi = mesh.index(i, j + 1, Port::South);
                const int k = crossings.owner(i, j, LinkAxis::Y);
                if (k < 0) {
                    vi[hi] = vr[lo];
                    vi[lo] = vr[hi];
                } else {
                    const auto [a, b] = list[static_cast<std::size_t>(k)].step(vr[lo], vr[hi]);
                    vi[lo] = a;
                    vi[hi] = b;
                }
            }
        }
    }

    const auto& bc = mesh.boundaries();
    const double g_west = reflection_coefficient(bc[Edge::West]);
    const double g_east = reflection_coefficient(bc[Edge::East]);
    const double g_south = reflection_coefficient(bc[Edge::South]);
    const double g_north = reflection_coefficient(bc[Edge::North]);
    for (int j = 0; j < ny; ++j) {
        const std::size_t w = mesh.index(0, j, Port::West);
        const std::size_t e = mesh.index(nx - 1, j, Port::East);
        vi[w] = g_west * vr[w];
        vi[e] = g_east * vr[e];
    }
    for (int i = 0; i < nx; ++i) {
        const std::size_t s = mesh.index(i, 0, Port::South);
        const std::size_t n = mesh.index(i, ny - 1, Port::North);
        vi[s] = g_south * vr[s];
        vi[n] = g_north * vr[n];
    }
}

inline void connect(MeshGrid& mesh) {
    CrossingSet none;
    connect(mesh, none);
}

struct ProbeRecords {
    double dl = 0.0;
    double dt = 0.0;
    long n_steps = 0;
    std::vector<Probe> probes;

    [[nodiscard]] const Probe& probe(const std::string& name) const {
        for (const auto& p : probes)
            if (p.name == name) return p;
        throw ConfigError("probe", "no probe named " + name);
    }
};

/// Called after the probes are recorded, once per step.
using StepObserver = std::function<void(long step, const MeshGrid& mesh)>;

/// Time loop: {inject, scatter, record, connect} x n_steps, starting from the
/// current mesh state.
inline ProbeRecords run(MeshGrid& mesh, CrossingSet& crossings, const std::vector<Source>& sources,
                        std::vector<Probe> probes, long n_steps, const StepObserver& observer = {}) {
    if (n_steps < 1) throw ConfigError("run.n_steps", "need at least one step");
    for (const auto& s : sources) validate(s, mesh);
    for (auto& p : probes) {
        validate(p, mesh);
        p.samples.clear();
        p.samples.reserve(static_cast<std::size_t>(n_steps));
    }
    if (!crossings.fits(mesh)) throw ConfigError("crossings", "crossing set was built for a different mesh");
    for (const auto& c : crossings.crossings()) {
        const auto& l = c.link();
        if (!mesh.contains(l.i, l.j) ||
            !mesh.contains(l.axis == LinkAxis::X ? l.i + 1 : l.i, l.axis == LinkAxis::Y ? l.j + 1 : l.j)) {
            throw CrossingOnBoundary("crossing " + to_string(l) + " does not fit the mesh");
        }
    }
    for (long step = 0; step < n_steps; ++step) {
        for (const auto& s : sources) inject(s, mesh, step);
        scatter(mesh);
        for (auto& p : probes) record(p, mesh);
        if (observer) observer(step, mesh);
        connect(mesh, crossings);
    }
    return ProbeRecords{mesh.dl(), mesh.dt(), n_steps, std::move(probes)};
}

}  // namespace curvetlm
