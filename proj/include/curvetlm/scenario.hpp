#pragma once

// Configuration-driven runs: parse a JSON scenario, build the mesh, panel,
// sources and probes, run, post-process, and write CSV outputs with a manifest.
// Link with OpenSSL (libcrypto) for the content hashes.

#include "curvetlm/analysis.hpp"
#include "curvetlm/engine.hpp"
#include "curvetlm/errors.hpp"
#include "curvetlm/geometry.hpp"
#include "curvetlm/snapshot.hpp"
#include "curvetlm/thin_panel.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace curvetlm {

inline constexpr const char* version = "1.0.0";

using json = nlohmann::json;
namespace fs = std::filesystem;

[[nodiscard]] inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    std::ostringstream os;
    for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
    return os.str();
}

[[nodiscard]] inline std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

struct MeshConfig {
    NodeKind kind = NodeKind::Shunt;
    double width = 0.0;
    double height = 0.0;
    double dl = 0.0;
    Boundaries boundaries;

    [[nodiscard]] int nx() const noexcept { return static_cast<int>(std::lround(width / dl)); }
    [[nodiscard]] int ny() const noexcept { return static_cast<int>(std::lround(height / dl)); }
    [[nodiscard]] MeshDescriptor descriptor() const noexcept { return {nx(), ny(), dl}; }
};

struct GapConfig {
    double x = 0.0;
    double width = 0.0;
    Surface surface = Surface::Lower;
};

struct GeometryConfig {
    Curve curve;
    PanelMaterial material;
    std::vector<GapConfig> gaps;
    /// Size used for the resolution ratio of sweeps, and its label.
    double feature = 0.0;
    std::string feature_label;
};

struct PanelConfig {
    int terms = default_truncation;
    bool embed = true;
    SolveMode solver = SolveMode::Direct;
};

struct SourceConfig {
    enum class Kind { Point, PlaneWave } kind = Kind::Point;
    double x = 0.0;
    double y = 0.0;
    double amplitude = 1.0;
    Envelope envelope = Impulse{};
    double x_begin = -1.0;  ///< plane wave extent; negative means the full row
    double x_end = -1.0;
};

struct ProbeConfig {
    std::string name;
    double x = 0.0;
    double y = 0.0;
    ProbeQuantity quantity = ProbeQuantity::Field;
};

struct AnalysisConfig {
    Window window = Window::Rectangular;
    int padding = 1;
    ResonanceOptions resonances;
    bool shielding = false;
    double band_min = 0.0;
    double band_max = std::numeric_limits<double>::infinity();
    std::vector<double> track;  ///< reference frequencies followed by sweeps
};

struct SnapshotConfig {
    std::vector<long> steps;
    bool db = false;
    bool binary = false;
    ProbeQuantity quantity = ProbeQuantity::Field;
};

struct OutputConfig {
    SnapshotConfig snapshots;
    bool crossings = true;
    bool spectra = true;
    /// Per-crossing filter coefficients and poles; large, so off by default.
    bool filters = false;
};

struct ScenarioConfig {
    std::string name = "scenario";
    MeshConfig mesh;
    std::optional<GeometryConfig> geometry;
    PanelConfig panel;
    SourceConfig source;
    std::vector<ProbeConfig> probes;
    long steps = 0;
    AnalysisConfig analysis;
    OutputConfig output;
    std::vector<double> sweep_dl;
    json raw;
};

namespace config_detail {

inline const json& need(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(path + "." + key, "missing");
    return j.at(key);
}

inline double number(const json& j, const std::string& key, const std::string& path) {
    const auto& v = need(j, key, path);
    if (!v.is_number()) throw ConfigError(path + "." + key, "must be a number");
    return v.get<double>();
}

inline double number_or(const json& j, const std::string& key, const std::string& path, double fallback) {
    return j.contains(key) ? number(j, key, path) : fallback;
}

inline long integer(const json& j, const std::string& key, const std::string& path) {
    const auto& v = need(j, key, path);
    if (!v.is_number_integer() && !(v.is_number() && std::floor(v.get<double>()) == v.get<double>())) {
        throw ConfigError(path + "." + key, "must be an integer");
    }
    return v.get<long>();
}

inline std::string text(const json& j, const std::string& key, const std::string& path) {
    const auto& v = need(j, key, path);
    if (!v.is_string()) throw ConfigError(path + "." + key, "must be a string");
    return v.get<std::string>();
}

inline std::string text_or(const json& j, const std::string& key, const std::string& path, std::string fallback) {
    return j.contains(key) ? text(j, key, path) : fallback;
}

inline bool flag_or(const json& j, const std::string& key, const std::string& path, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) throw ConfigError(path + "." + key, "must be true or false");
    return j.at(key).get<bool>();
}

inline Point point(const json& j, const std::string& key, const std::string& path) {
    const auto& v = need(j, key, path);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ConfigError(path + "." + key, "must be [x, y] in metres");
    }
    return {v[0].get<double>(), v[1].get<double>()};
}

inline BoundaryKind boundary(const std::string& s, const std::string& path) {
    if (s == "matched") return BoundaryKind::Matched;
    if (s == "pec") return BoundaryKind::PEC;
    throw ConfigError(path, "unknown boundary '" + s + "' (matched or pec)");
}

inline ProbeQuantity quantity(const std::string& s, const std::string& path) {
    if (s == "field") return ProbeQuantity::Field;
    if (s == "node") return ProbeQuantity::NodeValue;
    if (s == "ex") return ProbeQuantity::ElectricX;
    if (s == "ey") return ProbeQuantity::ElectricY;
    throw ConfigError(path, "unknown quantity '" + s + "' (field, node, ex or ey)");
}

inline Surface surface(const std::string& s, const std::string& path) {
    if (s == "upper") return Surface::Upper;
    if (s == "lower") return Surface::Lower;
    if (s == "any") return Surface::Any;
    throw ConfigError(path, "unknown surface '" + s + "' (upper, lower or any)");
}

inline Envelope envelope(const json& j, const std::string& path) {
    const std::string type = text_or(j, "type", path, "impulse");
    if (type == "impulse") return Impulse{};
    if (type == "gaussian") return Gaussian{number(j, "t0", path), number(j, "half_width", path)};
    if (type == "gaussian_modulated") {
        return GaussianModulated{number(j, "f_center", path), number(j, "bandwidth", path),
                                 number_or(j, "t0", path, -1.0)};
    }
    throw ConfigError(path + ".type", "unknown envelope '" + type + "'");
}

inline PanelMaterial material(const json& j, const std::string& path) {
    const std::string type = text(j, "type", path);
    if (type == "pec") return Pec{};
    if (type == "film") {
        FilmMaterial f{number_or(j, "eps_r", path, 1.0), number_or(j, "mu_r", path, 1.0),
                       number_or(j, "sigma_e", path, 0.0), number_or(j, "sigma_m", path, 0.0),
                       number(j, "thickness", path)};
        try {
            f.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(path, e.what());
        }
        return f;
    }
    throw ConfigError(path + ".type", "unknown material '" + type + "' (pec or film)");
}

inline GeometryConfig geometry(const json& j, const std::string& path) {
    GeometryConfig g;
    const auto& c = need(j, "curve", path);
    const std::string cp = path + ".curve";
    const std::string type = text(c, "type", cp);
    if (type == "ellipse") {
        const double a = number(c, "a", cp);
        const double b = number(c, "b", cp);
        g.curve = ellipse_curve(a, b, point(c, "center", cp));
        g.feature = b;
        g.feature_label = "b/dl";
    } else if (type == "naca4") {
        const double chord = number(c, "chord", cp);
        const double t = number(c, "t", cp);
        g.curve = naca4_profile(number(c, "m", cp), number(c, "p", cp), t, chord, point(c, "origin", cp),
                                static_cast<int>(c.contains("samples") ? integer(c, "samples", cp) : 200));
        g.feature = t * chord;
        g.feature_label = "t/dl";
    } else if (type == "polyline") {
        const auto& pts = need(c, "points", cp);
        if (!pts.is_array()) throw ConfigError(cp + ".points", "must be an array of [x, y]");
        std::vector<Point> points;
        for (const auto& p : pts) {
            if (!p.is_array() || p.size() != 2) throw ConfigError(cp + ".points", "must be an array of [x, y]");
            points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        g.curve = polyline_curve(std::move(points), flag_or(c, "closed", cp, true));
        const auto box = bounding_box(g.curve);
        g.feature = std::min(box.hi.x - box.lo.x, box.hi.y - box.lo.y);
        g.feature_label = "size/dl";
    } else {
        throw ConfigError(cp + ".type", "unknown curve '" + type + "' (ellipse, naca4 or polyline)");
    }
    g.material = material(need(j, "material", path), path + ".material");
    if (j.contains("gaps")) {
        const auto& gaps = j.at("gaps");
        if (!gaps.is_array()) throw ConfigError(path + ".gaps", "must be an array");
        for (std::size_t k = 0; k < gaps.size(); ++k) {
            const std::string gp = path + ".gaps[" + std::to_string(k) + "]";
            GapConfig gap{number(gaps[k], "x", gp), number(gaps[k], "width", gp),
                          surface(text_or(gaps[k], "surface", gp, "lower"), gp + ".surface")};
            if (gap.width < 0.0) throw ConfigError(gp + ".width", "must be non-negative");
            g.gaps.push_back(gap);
        }
    }
    return g;
}

inline bool integral(double v) { return std::abs(v - std::round(v)) < 1e-6 * std::max(1.0, std::abs(v)); }

}  // namespace config_detail

/// Parses and validates a scenario. Every error names the offending field.
[[nodiscard]] inline ScenarioConfig parse_config(const json& j) {
    using namespace config_detail;
    if (!j.is_object()) throw ConfigError("config", "top level must be an object");
    ScenarioConfig c;
    c.raw = j;
    c.name = text_or(j, "name", "config", "scenario");

    const auto& m = need(j, "mesh", "config");
    const std::string node = text(m, "node", "mesh");
    if (node != "series" && node != "shunt") throw ConfigError("mesh.node", "must be series or shunt");
    c.mesh.kind = node == "series" ? NodeKind::Series : NodeKind::Shunt;
    c.mesh.width = number(m, "width", "mesh");
    c.mesh.height = number(m, "height", "mesh");
    c.mesh.dl = number(m, "dl", "mesh");
    if (!(c.mesh.width > 0.0)) throw ConfigError("mesh.width", "must be positive");
    if (!(c.mesh.height > 0.0)) throw ConfigError("mesh.height", "must be positive");
    if (!(c.mesh.dl > 0.0)) throw ConfigError("mesh.dl", "must be positive");
    if (!integral(c.mesh.width / c.mesh.dl) || !integral(c.mesh.height / c.mesh.dl)) {
        throw ConfigError("mesh.dl", "window " + std::to_string(c.mesh.width) + " x " + std::to_string(c.mesh.height) +
                                         " is not a whole number of cells of " + std::to_string(c.mesh.dl));
    }
    if (c.mesh.nx() < 2 || c.mesh.ny() < 2) throw ConfigError("mesh.dl", "need at least 2x2 nodes");
    if (m.contains("boundary")) {
        const auto& b = m.at("boundary");
        if (b.is_string()) {
            c.mesh.boundaries = Boundaries::uniform(boundary(b.get<std::string>(), "mesh.boundary"));
        } else if (b.is_object()) {
            const std::array<std::pair<const char*, Edge>, 4> edges{
                {{"west", Edge::West}, {"east", Edge::East}, {"south", Edge::South}, {"north", Edge::North}}};
            for (const auto& [key, edge] : edges) {
                c.mesh.boundaries.edge[static_cast<int>(edge)] =
                    boundary(text_or(b, key, "mesh.boundary", "matched"), std::string("mesh.boundary.") + key);
            }
        } else {
            throw ConfigError("mesh.boundary", "must be a string or an object of edges");
        }
    }

    if (j.contains("geometry") && !j.at("geometry").is_null()) c.geometry = geometry(j.at("geometry"), "geometry");

    if (j.contains("panel")) {
        const auto& p = j.at("panel");
        c.panel.terms = static_cast<int>(p.contains("terms") ? integer(p, "terms", "panel") : default_truncation);
        if (c.panel.terms < 1) throw ConfigError("panel.terms", "must be at least 1");
        c.panel.embed = flag_or(p, "embed", "panel", true);
        const std::string solver = text_or(p, "solver", "panel", "direct");
        if (solver != "direct" && solver != "gauss_seidel") {
            throw ConfigError("panel.solver", "must be direct or gauss_seidel");
        }
        c.panel.solver = solver == "direct" ? SolveMode::Direct : SolveMode::GaussSeidel;
    }

    const auto& s = need(j, "source", "config");
    const std::string st = text(s, "type", "source");
    c.source.amplitude = number_or(s, "amplitude", "source", 1.0);
    c.source.envelope = s.contains("envelope") ? envelope(s.at("envelope"), "source.envelope") : Envelope{Impulse{}};
    validate(c.source.envelope);
    if (st == "point") {
        c.source.kind = SourceConfig::Kind::Point;
        const Point p = point(s, "position", "source");
        c.source.x = p.x;
        c.source.y = p.y;
    } else if (st == "plane_wave") {
        c.source.kind = SourceConfig::Kind::PlaneWave;
        c.source.y = number(s, "y", "source");
        c.source.x_begin = number_or(s, "x_begin", "source", -1.0);
        c.source.x_end = number_or(s, "x_end", "source", -1.0);
    } else {
        throw ConfigError("source.type", "unknown source '" + st + "' (point or plane_wave)");
    }

    const auto& probes = need(j, "probes", "config");
    if (!probes.is_array() || probes.empty()) throw ConfigError("probes", "need at least one probe");
    std::set<std::string> names;
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const std::string pp = "probes[" + std::to_string(k) + "]";
        ProbeConfig p;
        p.name = text_or(probes[k], "name", pp, "P" + std::to_string(k + 1));
        const Point pos = point(probes[k], "position", pp);
        p.x = pos.x;
        p.y = pos.y;
        p.quantity = quantity(text_or(probes[k], "quantity", pp, "field"), pp + ".quantity");
        if (!names.insert(p.name).second) throw ConfigError(pp + ".name", "duplicate probe name " + p.name);
        c.probes.push_back(p);
    }

    const auto& run_cfg = need(j, "run", "config");
    if (run_cfg.contains("duration")) {
        if (run_cfg.contains("steps")) throw ConfigError("run", "give steps or duration, not both");
        const double duration = number(run_cfg, "duration", "run");
        if (!(duration > 0.0)) throw ConfigError("run.duration", "must be positive");
        c.steps = static_cast<long>(std::ceil(duration / time_step(c.mesh.dl)));
    } else {
        c.steps = integer(run_cfg, "steps", "run");
    }
    if (c.steps < 16) throw ConfigError("run.steps", "need at least 16 steps");

    if (j.contains("analysis")) {
        const auto& a = j.at("analysis");
        const std::string w = text_or(a, "window", "analysis", "rectangular");
        if (w != "rectangular" && w != "hann") throw ConfigError("analysis.window", "must be rectangular or hann");
        c.analysis.window = w == "hann" ? Window::Hann : Window::Rectangular;
        c.analysis.padding = static_cast<int>(a.contains("padding") ? integer(a, "padding", "analysis") : 1);
        if (c.analysis.padding < 1) throw ConfigError("analysis.padding", "must be at least 1");
        auto& r = c.analysis.resonances;
        r.n_peaks = static_cast<int>(a.contains("n_peaks") ? integer(a, "n_peaks", "analysis") : 10);
        if (r.n_peaks < 1) throw ConfigError("analysis.n_peaks", "must be at least 1");
        r.min_prominence_db = number_or(a, "prominence_db", "analysis", 6.0);
        r.min_level_db = number_or(a, "level_db", "analysis", -60.0);
        r.min_separation = number_or(a, "min_separation", "analysis", 0.0);
        c.analysis.band_min = number_or(a, "f_min", "analysis", 0.0);
        c.analysis.band_max = number_or(a, "f_max", "analysis", std::numeric_limits<double>::infinity());
        if (!(c.analysis.band_max > c.analysis.band_min)) throw ConfigError("analysis.f_max", "must exceed f_min");
        r.f_min = c.analysis.band_min;
        r.f_max = c.analysis.band_max;
        const std::string sel = text_or(a, "selection", "analysis", "strongest");
        if (sel != "strongest" && sel != "lowest") throw ConfigError("analysis.selection", "must be strongest or lowest");
        r.selection = sel == "lowest" ? PeakSelection::Lowest : PeakSelection::Strongest;
        c.analysis.shielding = flag_or(a, "shielding", "analysis", false);
        if (a.contains("track")) {
            for (const auto& f : a.at("track")) {
                if (!f.is_number()) throw ConfigError("analysis.track", "must be an array of frequencies");
                c.analysis.track.push_back(f.get<double>());
            }
        }
    }
    if (c.analysis.shielding && !c.geometry) throw ConfigError("analysis.shielding", "needs a geometry to remove");
    if (c.analysis.band_max < std::numeric_limits<double>::infinity() &&
        std::holds_alternative<GaussianModulated>(c.source.envelope) &&
        !covers_band(c.source.envelope, std::max(c.analysis.band_min, 1.0), c.analysis.band_max)) {
        throw ConfigError("source.envelope", "spectrum falls below 1e-3 of its peak inside the analysis band");
    }

    if (j.contains("output")) {
        const auto& o = j.at("output");
        c.output.crossings = flag_or(o, "crossings", "output", true);
        c.output.spectra = flag_or(o, "spectra", "output", true);
        c.output.filters = flag_or(o, "filters", "output", false);
        if (o.contains("snapshots")) {
            const auto& sn = o.at("snapshots");
            if (sn.contains("steps")) {
                for (const auto& v : sn.at("steps")) {
                    if (!v.is_number_integer() || v.get<long>() < 0) {
                        throw ConfigError("output.snapshots.steps", "must be non-negative integers");
                    }
                    c.output.snapshots.steps.push_back(v.get<long>());
                }
            }
            c.output.snapshots.db = flag_or(sn, "db", "output.snapshots", false);
            c.output.snapshots.binary = flag_or(sn, "binary", "output.snapshots", false);
            c.output.snapshots.quantity =
                quantity(text_or(sn, "quantity", "output.snapshots", "field"), "output.snapshots.quantity");
        }
    }

    if (j.contains("sweep")) {
        const auto& sw = j.at("sweep");
        if (sw.contains("dl")) {
            for (const auto& v : sw.at("dl")) {
                if (!v.is_number() || !(v.get<double>() > 0.0)) throw ConfigError("sweep.dl", "must be positive numbers");
                c.sweep_dl.push_back(v.get<double>());
            }
        }
    }

    // Placement checks that need the node grid.
    const double dl = c.mesh.dl;
    auto node_inside = [&](double x, double y) {
        const int i = static_cast<int>(std::lround(x / dl));
        const int jj = static_cast<int>(std::lround(y / dl));
        return i >= 0 && jj >= 0 && i < c.mesh.nx() && jj < c.mesh.ny();
    };
    for (std::size_t k = 0; k < c.probes.size(); ++k) {
        if (!node_inside(c.probes[k].x, c.probes[k].y)) {
            throw ConfigError("probes[" + std::to_string(k) + "].position", "outside the window");
        }
        if ((c.probes[k].quantity == ProbeQuantity::ElectricX || c.probes[k].quantity == ProbeQuantity::ElectricY) &&
            c.mesh.kind != NodeKind::Series) {
            throw ConfigError("probes[" + std::to_string(k) + "].quantity", "ex and ey need a series mesh");
        }
    }
    if (c.source.kind == SourceConfig::Kind::Point && !node_inside(c.source.x, c.source.y)) {
        throw ConfigError("source.position", "outside the window");
    }
    if (c.source.kind == SourceConfig::Kind::PlaneWave && !node_inside(0.0, c.source.y)) {
        throw ConfigError("source.y", "outside the window");
    }
    if (c.geometry) {
        try {
            check_fits(c.geometry->curve, c.mesh.descriptor());
        } catch (const CurveOutOfBounds& e) {
            throw ConfigError("geometry.curve", e.what());
        }
    }
    for (long s : c.output.snapshots.steps) {
        if (s >= c.steps) throw ConfigError("output.snapshots.steps", "step " + std::to_string(s) + " is past run.steps");
    }
    return c;
}

[[nodiscard]] inline ScenarioConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

/// The same scenario on a different cell size.
[[nodiscard]] inline ScenarioConfig with_dl(const ScenarioConfig& c, double dl) {
    json j = c.raw;
    j["mesh"]["dl"] = dl;
    return parse_config(j);
}

/// Hash of the canonical (key-sorted, compact) JSON form of the whole scenario.
[[nodiscard]] inline std::string config_hash(const ScenarioConfig& c) { return sha256_hex(c.raw.dump()); }

/// Hash of the parts shared by a with/without pair: mesh, source, probes, run length.
[[nodiscard]] inline std::string excitation_hash(const ScenarioConfig& c) {
    json j;
    for (const char* key : {"mesh", "source", "probes", "run"})
        if (c.raw.contains(key)) j[key] = c.raw.at(key);
    return sha256_hex(j.dump());
}

struct ProbeResult {
    ProbeConfig config;
    int i = 0;
    int j = 0;
    std::vector<double> samples;                 ///< run with the panel (or the only run)
    std::optional<std::vector<double>> without;  ///< shield removed
    Spectrum spectrum;
    std::optional<Spectrum> spectrum_without;
    ResonanceTable resonances;
    std::optional<SeCurve> se;
};

struct RunTiming {
    std::string label;
    double seconds = 0.0;
};

struct ScenarioResult {
    std::string name;
    std::string config_hash;
    std::string excitation_hash;
    int nx = 0;
    int ny = 0;
    double dl = 0.0;
    double dt = 0.0;
    long steps = 0;
    std::size_t crossing_count = 0;
    std::vector<CrossingSeed> crossings;
    std::vector<CrossingSeed> gap_removed;
    std::vector<std::string> diagnostics;
    std::vector<ProbeResult> probes;
    std::vector<SnapshotGrid> snapshots;
    std::vector<RunTiming> timings;
    std::vector<fs::path> outputs;

    [[nodiscard]] const ProbeResult& probe(const std::string& name) const {
        for (const auto& p : probes)
            if (p.config.name == name) return p;
        throw ConfigError("probe", "no probe named " + name);
    }
};

namespace scenario_detail {

inline int node_index(double coord, double dl) { return static_cast<int>(std::lround(coord / dl)); }

inline Source build_source(const SourceConfig& s, double dl) {
    if (s.kind == SourceConfig::Kind::Point) {
        return DeltaPoint{node_index(s.x, dl), node_index(s.y, dl), s.amplitude, s.envelope};
    }
    PlaneWaveLine line{node_index(s.y, dl), s.amplitude, s.envelope, 0, -1};
    if (s.x_begin >= 0.0) line.i_begin = node_index(s.x_begin, dl);
    if (s.x_end >= 0.0) line.i_end = node_index(s.x_end, dl) + 1;
    return line;
}

inline void write_probe_csv(const fs::path& path, const std::vector<double>& samples, double dt) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os.precision(17);
    os << "step,time_s,value\n";
    for (std::size_t k = 0; k < samples.size(); ++k) os << k << ',' << static_cast<double>(k) * dt << ',' << samples[k] << '\n';
}

template <class Writer>
inline void write_file(const fs::path& path, std::vector<fs::path>& outputs, Writer&& writer,
                       std::ios::openmode mode = std::ios::out) {
    std::ofstream os(path, mode);
    if (!os) throw Error("cannot write " + path.string());
    writer(os);
    os.close();
    if (!os) throw Error("failed writing " + path.string());
    outputs.push_back(path);
}

}  // namespace scenario_detail

/// Runs the scenario. With `out_dir` set, every output is written there along
/// with manifest.json. Shielding scenarios run the pair automatically: once
/// with the panel and once with it removed, everything else unchanged.
[[nodiscard]] inline ScenarioResult run_scenario(const ScenarioConfig& c, const std::optional<fs::path>& out_dir = {},
                                                 std::ostream* log = nullptr) {
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    ScenarioResult r;
    r.name = c.name;
    r.config_hash = config_hash(c);
    r.excitation_hash = excitation_hash(c);
    r.nx = c.mesh.nx();
    r.ny = c.mesh.ny();
    r.dl = c.mesh.dl;
    r.dt = time_step(c.mesh.dl);
    r.steps = c.steps;

    // Crossings.
    const bool with_panel = c.geometry.has_value() && c.panel.embed;
    if (with_panel) {
        auto layout = compute_crossings(c.geometry->curve, c.mesh.descriptor());
        for (const auto& g : c.geometry->gaps) {
            auto gapped = apply_gap(layout, c.geometry->curve, g.x, g.width, g.surface);
            r.gap_removed.insert(r.gap_removed.end(), gapped.removed.begin(), gapped.removed.end());
            layout = std::move(gapped.layout);
        }
        r.crossings = layout.seeds;
        r.crossing_count = layout.seeds.size();
        r.diagnostics = layout.diagnostics;
    }
    if (log) {
        *log << c.name << ": " << r.nx << "x" << r.ny << " nodes, dl=" << r.dl << " m, " << c.steps << " steps, "
             << r.crossing_count << " crossings\n";
        for (const auto& d : r.diagnostics) *log << "  note: " << d << '\n';
    }

    const std::vector<Source> sources{scenario_detail::build_source(c.source, c.mesh.dl)};
    std::vector<Probe> probes;
    for (const auto& p : c.probes) {
        probes.push_back(Probe{p.name, scenario_detail::node_index(p.x, c.mesh.dl),
                               scenario_detail::node_index(p.y, c.mesh.dl), p.quantity, {}});
    }

    auto execute = [&](bool panel, const std::string& label, bool snapshots) {
        MeshGrid mesh(r.nx, r.ny, c.mesh.dl, c.mesh.kind, c.mesh.boundaries);
        CrossingSet set;
        if (panel) {
            set = make_crossing_set(mesh, r.crossings, {c.geometry->material}, c.panel.terms);
            for (auto& x : set.crossings()) x.set_solve_mode(c.panel.solver);
        }
        StepObserver observer;
        std::set<long> wanted(c.output.snapshots.steps.begin(), c.output.snapshots.steps.end());
        if (snapshots && !wanted.empty()) {
            observer = [&](long step, const MeshGrid& m) {
                if (wanted.count(step)) r.snapshots.push_back(take_snapshot(m, step, c.output.snapshots.quantity));
            };
        }
        const auto t0 = clock::now();
        auto rec = run(mesh, set, sources, probes, c.steps, observer);
        const double secs = std::chrono::duration<double>(clock::now() - t0).count();
        r.timings.push_back({label, secs});
        if (log) *log << "  " << label << " run: " << std::fixed << std::setprecision(2) << secs << " s\n"
                      << std::defaultfloat;
        return rec;
    };

    const auto main_rec = execute(with_panel, with_panel ? "with_panel" : "main", true);
    std::optional<ProbeRecords> bare;
    if (c.analysis.shielding) bare = execute(false, "without_panel", false);

    for (std::size_t k = 0; k < probes.size(); ++k) {
        ProbeResult p;
        p.config = c.probes[k];
        p.i = probes[k].i;
        p.j = probes[k].j;
        p.samples = main_rec.probes[k].samples;
        p.spectrum = spectrum(p.samples, r.dt, c.analysis.window, c.analysis.padding, r.excitation_hash);
        p.resonances = find_resonances(p.spectrum, c.analysis.resonances);
        if (bare) {
            p.without = bare->probes[k].samples;
            p.spectrum_without = spectrum(*p.without, r.dt, c.analysis.window, c.analysis.padding, r.excitation_hash);
            p.se = shielding_effectiveness(*p.spectrum_without, p.spectrum);
        }
        r.probes.push_back(std::move(p));
    }

    if (!out_dir) return r;

    fs::create_directories(*out_dir);
    const fs::path dir = *out_dir;
    using scenario_detail::write_file;
    const std::string suffix = bare ? "_with" : "";
    for (const auto& p : r.probes) {
        const std::string n = p.config.name;
        write_file(dir / ("probe_" + n + suffix + ".csv"), r.outputs, [&](std::ostream& os) {
            os.precision(17);
            os << "step,time_s,value\n";
            for (std::size_t k = 0; k < p.samples.size(); ++k)
                os << k << ',' << static_cast<double>(k) * r.dt << ',' << p.samples[k] << '\n';
        });
        if (p.without) {
            write_file(dir / ("probe_" + n + "_without.csv"), r.outputs, [&](std::ostream& os) {
                os.precision(17);
                os << "step,time_s,value\n";
                for (std::size_t k = 0; k < p.without->size(); ++k)
                    os << k << ',' << static_cast<double>(k) * r.dt << ',' << (*p.without)[k] << '\n';
            });
        }
        if (c.output.spectra) {
            write_file(dir / ("spectrum_" + n + suffix + ".csv"), r.outputs,
                       [&](std::ostream& os) { write_spectrum_csv(os, p.spectrum); });
            if (p.spectrum_without) {
                write_file(dir / ("spectrum_" + n + "_without.csv"), r.outputs,
                           [&](std::ostream& os) { write_spectrum_csv(os, *p.spectrum_without); });
            }
        }
        write_file(dir / ("resonances_" + n + ".csv"), r.outputs,
                   [&](std::ostream& os) { write_resonances_csv(os, p.resonances); });
        if (p.se) {
            write_file(dir / ("se_" + n + ".csv"), r.outputs, [&](std::ostream& os) {
                write_se_csv(os, *p.se, c.analysis.band_min, c.analysis.band_max);
            });
        }
    }
    if (with_panel && c.output.crossings) {
        write_file(dir / "crossings.csv", r.outputs, [&](std::ostream& os) { write_crossings_csv(os, r.crossings); });
    }
    if (with_panel && c.output.filters) {
        const MeshGrid mesh(r.nx, r.ny, c.mesh.dl, c.mesh.kind, c.mesh.boundaries);
        const auto set = make_crossing_set(mesh, r.crossings, {c.geometry->material}, c.panel.terms);
        write_file(dir / "filters.csv", r.outputs, [&](std::ostream& os) {
            bool header = true;
            for (std::size_t k = 0; k < set.size(); ++k) {
                const auto& x = set.crossings()[k];
                const int id = static_cast<int>(k);
                if (x.film_bank()) write_bank_csv(os, *x.film_bank(), id, std::exchange(header, false), "film");
                if (x.lower_stub()) write_bank_csv(os, *x.lower_stub(), id, std::exchange(header, false), "lower_stub");
                if (x.upper_stub()) write_bank_csv(os, *x.upper_stub(), id, std::exchange(header, false), "upper_stub");
            }
        });
    }
    for (const auto& snap : r.snapshots) {
        const SnapshotGrid g = c.output.snapshots.db ? to_db(snap) : snap;
        const std::string stem = "snapshot_" + std::to_string(snap.step);
        write_file(dir / (stem + ".csv"), r.outputs, [&](std::ostream& os) { write_snapshot_csv(os, g); });
        if (c.output.snapshots.binary) {
            write_file(
                dir / (stem + ".bin"), r.outputs, [&](std::ostream& os) { write_snapshot_binary(os, g); },
                std::ios::out | std::ios::binary);
        }
    }

    json manifest;
    manifest["name"] = c.name;
    manifest["config_sha256"] = r.config_hash;
    manifest["excitation_sha256"] = r.excitation_hash;
    manifest["config"] = c.raw;
    manifest["versions"] = {{"curvetlm", version},
                            {"compiler", __VERSION__},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                          "." + std::to_string(EIGEN_MINOR_VERSION)},
                            {"fftw", std::string(fftw_version)},
                            {"openssl", OPENSSL_VERSION_TEXT}};
    manifest["mesh"] = {{"nx", r.nx}, {"ny", r.ny}, {"dl", r.dl}, {"dt", r.dt}, {"steps", r.steps}};
    manifest["crossings"] = r.crossing_count;
    manifest["gap_removed"] = r.gap_removed.size();
    manifest["diagnostics"] = r.diagnostics;
    json timings = json::object();
    for (const auto& t : r.timings) timings[t.label + "_s"] = t.seconds;
    timings["total_s"] = std::chrono::duration<double>(clock::now() - started).count();
    manifest["timings"] = timings;
    json files = json::array();
    for (const auto& f : r.outputs) files.push_back({{"path", f.filename().string()}, {"sha256", sha256_file(f)}});
    manifest["outputs"] = files;
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) throw Error("cannot write manifest in " + dir.string());
    return r;
}

struct SweepRow {
    double dl = 0.0;
    double ratio = 0.0;
    std::vector<double> frequencies;
};

struct SweepResult {
    std::string ratio_label;
    std::vector<SweepRow> rows;
};

/// Frequencies reported for one run: the first probe's resonances, or the
/// resonance nearest each tracked reference.
[[nodiscard]] inline std::vector<double> sweep_frequencies(const ScenarioConfig& c, const ScenarioResult& r) {
    const auto& table = r.probes.front().resonances;
    std::vector<double> out;
    if (c.analysis.track.empty()) {
        for (const auto& x : table) out.push_back(x.frequency);
    } else {
        for (double f : c.analysis.track) {
            const auto* n = nearest(table, f);
            out.push_back(n ? n->frequency : std::numeric_limits<double>::quiet_NaN());
        }
    }
    return out;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
    std::size_t cols = 0;
    for (const auto& row : s.rows) cols = std::max(cols, row.frequencies.size());
    os << "dl," << s.ratio_label;
    for (std::size_t k = 0; k < cols; ++k) os << ",f" << k + 1;
    os << '\n';
    os.precision(12);
    for (const auto& row : s.rows) {
        os << row.dl << ',' << row.ratio;
        for (std::size_t k = 0; k < cols; ++k) {
            os << ',';
            if (k < row.frequencies.size()) os << row.frequencies[k];
        }
        os << '\n';
    }
}

/// Reruns the scenario per cell size. Each run writes into out_dir/dl_<value>
/// and the table goes to out_dir/convergence.csv.
[[nodiscard]] inline SweepResult sweep(const ScenarioConfig& c, const std::vector<double>& dls,
                                       const std::optional<fs::path>& out_dir = {}, std::ostream* log = nullptr) {
    if (dls.empty()) throw ConfigError("sweep.dl", "no cell sizes given");
    SweepResult s;
    s.ratio_label = c.geometry ? c.geometry->feature_label : "width/dl";
    for (double dl : dls) {
        const auto cfg = with_dl(c, dl);
        std::optional<fs::path> sub;
        if (out_dir) {
            std::ostringstream name;
            name << "dl_" << dl;
            sub = *out_dir / name.str();
        }
        const auto r = run_scenario(cfg, sub, log);
        const double feature = c.geometry ? c.geometry->feature : c.mesh.width;
        s.rows.push_back({dl, feature / dl, sweep_frequencies(cfg, r)});
    }
    if (out_dir) {
        fs::create_directories(*out_dir);
        std::ofstream os(*out_dir / "convergence.csv");
        write_sweep_csv(os, s);
        if (!os) throw Error("cannot write convergence table");
    }
    return s;
}

}  // namespace curvetlm
