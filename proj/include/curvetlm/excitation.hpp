#pragma once

// Soft sources and node probes.

#include "curvetlm/constants.hpp"
#include "curvetlm/errors.hpp"
#include "curvetlm/mesh.hpp"

#include <cmath>
#include <string>
#include <variant>
#include <vector>

namespace curvetlm {

struct Impulse {};

/// exp(-((t - t0)/half_width)^2)
struct Gaussian {
    double t0 = 0.0;
    double half_width = 0.0;
};

/// exp(-((t - t0)/tau)^2) cos(2 pi f_center (t - t0)), tau = 1/(pi bandwidth),
/// so the spectrum falls to 1/e at f_center +- bandwidth. t0 defaults to 4 tau.
struct GaussianModulated {
    double f_center = 0.0;
    double bandwidth = 0.0;
    double t0 = -1.0;

    [[nodiscard]] double tau() const noexcept { return 1.0 / (constants::pi * bandwidth); }
    [[nodiscard]] double delay() const noexcept { return t0 >= 0.0 ? t0 : 4.0 * tau(); }
};

using Envelope = std::variant<Impulse, Gaussian, GaussianModulated>;

[[nodiscard]] inline double envelope_value(const Envelope& env, long step, double dt) noexcept {
    if (std::holds_alternative<Impulse>(env)) return step == 0 ? 1.0 : 0.0;
    const double t = static_cast<double>(step) * dt;
    if (const auto* g = std::get_if<Gaussian>(&env)) {
        const double a = (t - g->t0) / g->half_width;
        return std::exp(-a * a);
    }
    const auto& m = std::get<GaussianModulated>(env);
    const double t0 = m.delay();
    const double a = (t - t0) / m.tau();
    return std::exp(-a * a) * std::cos(2.0 * constants::pi * m.f_center * (t - t0));
}

/// Spectral magnitude of the envelope relative to its peak, at frequency f.
[[nodiscard]] inline double relative_spectrum(const Envelope& env, double f) noexcept {
    if (std::holds_alternative<Impulse>(env)) return 1.0;
    if (const auto* g = std::get_if<Gaussian>(&env)) {
        const double a = constants::pi * f * g->half_width;
        return std::exp(-a * a);
    }
    const auto& m = std::get<GaussianModulated>(env);
    const double a = constants::pi * (f - m.f_center) * m.tau();
    return std::exp(-a * a);
}

/// True when the envelope spectrum at both band edges is at least 1e-3 of its peak.
[[nodiscard]] inline bool covers_band(const Envelope& env, double f_lo, double f_hi) noexcept {
    return relative_spectrum(env, f_lo) >= 1e-3 && relative_spectrum(env, f_hi) >= 1e-3;
}

inline void validate(const Envelope& env) {
    if (const auto* g = std::get_if<Gaussian>(&env)) {
        if (!(g->half_width > 0.0)) throw ConfigError("source.envelope.half_width", "must be positive");
        if (g->t0 < 0.0) throw ConfigError("source.envelope.t0", "must be non-negative");
    } else if (const auto* m = std::get_if<GaussianModulated>(&env)) {
        if (!(m->f_center > 0.0)) throw ConfigError("source.envelope.f_center", "must be positive");
        if (!(m->bandwidth > 0.0)) throw ConfigError("source.envelope.bandwidth", "must be positive");
    }
}

/// Soft point source on one node.
struct DeltaPoint {
    int i = 0;
    int j = 0;
    double amplitude = 1.0;
    Envelope envelope = Impulse{};
};

/// Soft line source on every node of row j in [i_begin, i_end).
/// i_end < 0 means the full row.
struct PlaneWaveLine {
    int j = 0;
    double amplitude = 1.0;
    Envelope envelope = Impulse{};
    int i_begin = 0;
    int i_end = -1;
};

using Source = std::variant<DeltaPoint, PlaneWaveLine>;

inline void validate(const Source& src, const MeshGrid& mesh) {
    if (const auto* p = std::get_if<DeltaPoint>(&src)) {
        if (!mesh.contains(p->i, p->j)) throw ConfigError("source.position", "point source outside the mesh");
        validate(p->envelope);
    } else {
        const auto& l = std::get<PlaneWaveLine>(src);
        if (l.j < 0 || l.j >= mesh.ny()) throw ConfigError("source.row", "line source row outside the mesh");
        const int end = l.i_end < 0 ? mesh.nx() : l.i_end;
        if (l.i_begin < 0 || end > mesh.nx() || l.i_begin >= end) {
            throw ConfigError("source.columns", "line source column range outside the mesh");
        }
        validate(l.envelope);
    }
}

namespace detail {

/// Adds `value` to the node quantity of (i, j): V^i += value/2 on each port,
/// signed with the loop pattern for series nodes.
inline void add_to_node(MeshGrid& mesh, int i, int j, double value) noexcept {
    const double half = 0.5 * value;
    for (Port p : all_ports) {
        const double sign = mesh.kind() == NodeKind::Shunt ? 1.0 : series_loop_signs[static_cast<int>(p)];
        mesh.incident(i, j, p) += sign * half;
    }
}

}  // namespace detail

/// Soft injection for time step `step`. Raises the node quantity of every
/// driven node by amplitude * envelope(step).
inline void inject(const Source& src, MeshGrid& mesh, long step) noexcept {
    if (const auto* p = std::get_if<DeltaPoint>(&src)) {
        const double v = p->amplitude * envelope_value(p->envelope, step, mesh.dt());
        if (v != 0.0) detail::add_to_node(mesh, p->i, p->j, v);
        return;
    }
    const auto& l = std::get<PlaneWaveLine>(src);
    const double v = l.amplitude * envelope_value(l.envelope, step, mesh.dt());
    if (v == 0.0) return;
    const int end = l.i_end < 0 ? mesh.nx() : l.i_end;
    for (int i = l.i_begin; i < end; ++i) detail::add_to_node(mesh, i, l.j, v);
}

/// NodeValue and Field follow MeshGrid. On series meshes ElectricX and
/// ElectricY give the in-plane electric field from the total port voltages:
/// the y-directed links (ports 1, 3) carry E_x, the x-directed links (ports 2, 4) carry E_y.
enum class ProbeQuantity { NodeValue, Field, ElectricX, ElectricY };

struct Probe {
    std::string name;
    int i = 0;
    int j = 0;
    ProbeQuantity quantity = ProbeQuantity::Field;
    std::vector<double> samples;
};

inline void validate(const Probe& probe, const MeshGrid& mesh) {
    if (!mesh.contains(probe.i, probe.j)) throw ConfigError("probe." + probe.name, "probe outside the mesh");
    if ((probe.quantity == ProbeQuantity::ElectricX || probe.quantity == ProbeQuantity::ElectricY) &&
        mesh.kind() != NodeKind::Series) {
        throw ConfigError("probe." + probe.name, "in-plane electric field probes need a series mesh");
    }
}

/// Quantity seen by a probe; valid after the scatter phase of a step.
[[nodiscard]] inline double probe_value(const Probe& probe, const MeshGrid& mesh) noexcept {
    auto total = [&](Port p) { return mesh.incident(probe.i, probe.j, p) + mesh.reflected(probe.i, probe.j, p); };
    switch (probe.quantity) {
    case ProbeQuantity::NodeValue: return mesh.node_value(probe.i, probe.j);
    case ProbeQuantity::Field: return mesh.field(probe.i, probe.j);
    case ProbeQuantity::ElectricX: return 0.5 * (total(Port::South) + total(Port::North)) / mesh.dl();
    case ProbeQuantity::ElectricY: return 0.5 * (total(Port::West) + total(Port::East)) / mesh.dl();
    }
    return 0.0;
}

inline void record(Probe& probe, const MeshGrid& mesh) {
    probe.samples.push_back(probe_value(probe, mesh));
}

}  // namespace curvetlm
