#pragma once

// Curves, their intersections with the link lines of a mesh, and gaps.
//
// Node (i, j) sits at (i*dl, j*dl). Row j is the line y = j*dl carrying the
// x-directed links; column i is the line x = i*dl carrying the y-directed links.

#include "curvetlm/constants.hpp"
#include "curvetlm/crossing.hpp"
#include "curvetlm/errors.hpp"
#include "curvetlm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace curvetlm {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class Surface { Upper, Lower, TrailingEdge, Any };

[[nodiscard]] inline std::string to_string(Surface s) {
    switch (s) {
    case Surface::Upper: return "upper";
    case Surface::Lower: return "lower";
    case Surface::TrailingEdge: return "trailing_edge";
    case Surface::Any: return "any";
    }
    return "any";
}

/// (x - cx)^2/a^2 + (y - cy)^2/b^2 = 1, with the a axis along x.
struct Ellipse {
    double a = 0.0;
    double b = 0.0;
    Point center;

    [[nodiscard]] double implicit(Point p) const noexcept {
        const double u = (p.x - center.x) / a;
        const double v = (p.y - center.y) / b;
        return u * u + v * v - 1.0;
    }
};

/// Piecewise-linear curve. `surface[k]` tags segment k (points k to k+1, the
/// last one wrapping to point 0 for a closed curve).
struct Polyline {
    std::vector<Point> points;
    std::vector<Surface> surface;
    bool closed = false;

    [[nodiscard]] std::size_t segment_count() const noexcept {
        if (points.size() < 2) return 0;
        return closed ? points.size() : points.size() - 1;
    }
    [[nodiscard]] Point segment_start(std::size_t k) const noexcept { return points[k]; }
    [[nodiscard]] Point segment_end(std::size_t k) const noexcept { return points[(k + 1) % points.size()]; }
};

struct Naca4 {
    double m = 0.0;  ///< maximum camber, fraction of chord
    double p = 0.0;  ///< camber position, fraction of chord
    double t = 0.0;  ///< maximum thickness, fraction of chord
    double c = 0.0;  ///< chord, m
    Point origin;    ///< leading edge; the chord runs along +x
    int n_samples = 200;
    Polyline outline;
};

/// y = f(x) sampled on [x_begin, x_end].
struct Explicit {
    Polyline outline;
};

using Curve = std::variant<Ellipse, Naca4, Explicit>;

[[nodiscard]] inline Curve ellipse_curve(double a, double b, Point center) {
    if (!(b > 0.0 && a >= b)) throw ConfigError("geometry.ellipse", "need a >= b > 0");
    return Ellipse{a, b, center};
}

namespace naca {

/// Half thickness per unit chord at xb = x/c; the open trailing-edge variant.
[[nodiscard]] inline double half_thickness(double t, double xb) noexcept {
    return 5.0 * t *
           (0.2969 * std::sqrt(xb) - 0.1260 * xb - 0.3516 * xb * xb + 0.2843 * xb * xb * xb -
            0.1015 * xb * xb * xb * xb);
}

/// Camber line height per unit chord and its slope.
[[nodiscard]] inline std::pair<double, double> camber(double m, double p, double xb) noexcept {
    if (m == 0.0) return {0.0, 0.0};
    if (xb < p) return {m / (p * p) * (2.0 * p * xb - xb * xb), 2.0 * m / (p * p) * (p - xb)};
    const double q = (1.0 - p) * (1.0 - p);
    return {m / q * (1.0 - 2.0 * p + 2.0 * p * xb - xb * xb), 2.0 * m / q * (p - xb)};
}

}  // namespace naca

/// Closed NACA 4-digit outline: upper surface from the trailing edge to the
/// leading edge, lower surface back, and a straight segment closing the blunt
/// trailing edge. Samples are cosine-spaced along the chord.
[[nodiscard]] inline Curve naca4_profile(double m, double p, double t, double c, Point origin, int n_samples = 200) {
    if (!(m >= 0.0 && m < 1.0)) throw ConfigError("geometry.naca4.m", "need 0 <= m < 1");
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("geometry.naca4.p", "need 0 < p < 1");
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("geometry.naca4.t", "need 0 < t < 1");
    if (!(c > 0.0)) throw ConfigError("geometry.naca4.c", "chord must be positive");
    if (n_samples < 50) throw ConfigError("geometry.naca4.n_samples", "need at least 50 samples per surface");

    std::vector<Point> upper;
    std::vector<Point> lower;
    for (int k = 0; k < n_samples; ++k) {
        const double beta = constants::pi * static_cast<double>(k) / static_cast<double>(n_samples - 1);
        const double xb = 0.5 * (1.0 - std::cos(beta));
        const double yt = naca::half_thickness(t, xb);
        const auto [yc, slope] = naca::camber(m, p, xb);
        const double th = std::atan(slope);
        upper.push_back({origin.x + c * (xb - yt * std::sin(th)), origin.y + c * (yc + yt * std::cos(th))});
        lower.push_back({origin.x + c * (xb + yt * std::sin(th)), origin.y + c * (yc - yt * std::cos(th))});
    }

    Polyline poly;
    poly.closed = true;
    for (int k = n_samples - 1; k >= 0; --k) poly.points.push_back(upper[static_cast<std::size_t>(k)]);
    for (int k = 1; k < n_samples; ++k) poly.points.push_back(lower[static_cast<std::size_t>(k)]);
    const auto n_upper = static_cast<std::size_t>(n_samples - 1);
    poly.surface.assign(n_upper, Surface::Upper);
    poly.surface.insert(poly.surface.end(), n_upper, Surface::Lower);
    poly.surface.push_back(Surface::TrailingEdge);
    return Naca4{m, p, t, c, origin, n_samples, std::move(poly)};
}

/// Open polyline through (x, f(x)) at n_samples evenly spaced abscissae.
[[nodiscard]] inline Curve explicit_curve(const std::function<double(double)>& f, double x_begin, double x_end,
                                          int n_samples) {
    if (!(x_end > x_begin)) throw ConfigError("geometry.explicit", "need x_end > x_begin");
    if (n_samples < 2) throw ConfigError("geometry.explicit.n_samples", "need at least 2 samples");
    Polyline poly;
    for (int k = 0; k < n_samples; ++k) {
        const double x = x_begin + (x_end - x_begin) * static_cast<double>(k) / static_cast<double>(n_samples - 1);
        poly.points.push_back({x, f(x)});
    }
    poly.surface.assign(poly.segment_count(), Surface::Any);
    return Explicit{std::move(poly)};
}

/// Closed or open polyline given point by point.
[[nodiscard]] inline Curve polyline_curve(std::vector<Point> points, bool closed) {
    if (points.size() < 2) throw ConfigError("geometry.polyline", "need at least 2 points");
    Polyline poly{std::move(points), {}, closed};
    poly.surface.assign(poly.segment_count(), Surface::Any);
    return Explicit{std::move(poly)};
}

[[nodiscard]] inline const Polyline* outline(const Curve& curve) noexcept {
    if (const auto* n = std::get_if<Naca4>(&curve)) return &n->outline;
    if (const auto* e = std::get_if<Explicit>(&curve)) return &e->outline;
    return nullptr;
}

[[nodiscard]] inline bool is_closed(const Curve& curve) noexcept {
    const auto* poly = outline(curve);
    return poly == nullptr || poly->closed;
}

struct BoundingBox {
    Point lo;
    Point hi;
};

[[nodiscard]] inline BoundingBox bounding_box(const Curve& curve) {
    if (const auto* e = std::get_if<Ellipse>(&curve)) {
        return {{e->center.x - e->a, e->center.y - e->b}, {e->center.x + e->a, e->center.y + e->b}};
    }
    const auto* poly = outline(curve);
    BoundingBox box{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
                    {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
    for (const auto& p : poly->points) {
        box.lo.x = std::min(box.lo.x, p.x);
        box.lo.y = std::min(box.lo.y, p.y);
        box.hi.x = std::max(box.hi.x, p.x);
        box.hi.y = std::max(box.hi.y, p.y);
    }
    return box;
}

/// Where the mesh lives: node counts and cell size.
struct MeshDescriptor {
    int nx = 0;
    int ny = 0;
    double dl = 0.0;

    static MeshDescriptor of(const MeshGrid& mesh) noexcept { return {mesh.nx(), mesh.ny(), mesh.dl()}; }
};

/// One intersection of the curve with a link line.
struct CrossingSeed {
    LinkId link;
    double alpha = 0.0;     ///< l1/dl, measured from the lower-index node
    int material = 0;       ///< index into the scenario's material list
    Point point;            ///< intersection point
    double arc = 0.0;       ///< arc length from the start of the curve
    Surface surface = Surface::Any;
};

struct CrossingLayout {
    std::vector<CrossingSeed> seeds;       ///< one per link, sorted along the curve
    int tangencies = 0;                    ///< touching contacts that registered no crossing
    int merged = 0;                        ///< extra intersections dropped on multiply-crossed links
    std::vector<std::string> diagnostics;  ///< MeshTooCoarse and similar notes
    bool connected = true;                 ///< consecutive crossings share a cell
};

/// Relative distance to a node within which a crossing is snapped onto it.
inline constexpr double snap_fraction = 1e-9;
/// Bisection stops once the bracket is below this fraction of a cell.
inline constexpr double bisection_fraction = 1e-12;

namespace detail {

/// Arc length of the ellipse from angle 0 to theta (counter-clockwise).
inline double ellipse_arc(const Ellipse& e, double theta) {
    const int n = 512;
    const double h = theta / n;
    auto speed = [&](double t) { return std::hypot(e.a * std::sin(t), e.b * std::cos(t)); };
    double sum = speed(0.0) + speed(theta);
    for (int k = 1; k < n; ++k) sum += (k % 2 ? 4.0 : 2.0) * speed(k * h);
    return sum * h / 3.0;
}

inline double ellipse_angle(const Ellipse& e, Point p) {
    double th = std::atan2((p.y - e.center.y) / e.b, (p.x - e.center.x) / e.a);
    if (th < 0.0) th += 2.0 * constants::pi;
    return th;
}

/// Root of a monotone function on [lo, hi] with a sign change, by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, double tol) {
    double flo = f(lo);
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Intersections of the ellipse with the line {fixed coordinate = c}. Returns
/// the two roots of the free coordinate, or none when the line misses or
/// touches the ellipse.
inline std::optional<std::pair<double, double>> ellipse_line_roots(const Ellipse& e, bool row, double c, double dl,
                                                                   int& tangencies) {
    const double half_fixed = row ? e.b : e.a;
    const double half_free = row ? e.a : e.b;
    const double c0 = row ? e.center.y : e.center.x;
    const double f0 = row ? e.center.x : e.center.y;
    const double v = (c - c0) / half_fixed;
    if (std::abs(v) > 1.0) return std::nullopt;
    // Analytic half chord only decides tangency; the roots come from bisection.
    const double half_chord = half_free * std::sqrt(std::max(0.0, 1.0 - v * v));
    if (2.0 * half_chord < snap_fraction * dl) {
        ++tangencies;
        return std::nullopt;
    }
    auto f = [&](double w) {
        const Point p = row ? Point{w, c} : Point{c, w};
        return e.implicit(p);
    };
    const double tol = bisection_fraction * dl;
    const double right = bisect(f, f0, f0 + half_free, tol);
    const double left = bisect(f, f0 - half_free, f0, tol);
    return std::make_pair(left, right);
}

inline double polyline_length_before(const Polyline& poly, std::size_t seg, std::vector<double>& cumulative) {
    if (cumulative.empty()) {
        cumulative.assign(poly.segment_count() + 1, 0.0);
        for (std::size_t k = 0; k < poly.segment_count(); ++k) {
            const Point a = poly.segment_start(k);
            const Point b = poly.segment_end(k);
            cumulative[k + 1] = cumulative[k] + std::hypot(b.x - a.x, b.y - a.y);
        }
    }
    return cumulative[seg];
}

}  // namespace detail

/// Throws CurveOutOfBounds unless the curve keeps one full cell clear of the
/// outermost node lines.
inline void check_fits(const Curve& curve, const MeshDescriptor& mesh) {
    const auto box = bounding_box(curve);
    const double lo = mesh.dl;
    const double hi_x = (mesh.nx - 2) * mesh.dl;
    const double hi_y = (mesh.ny - 2) * mesh.dl;
    const double tol = snap_fraction * mesh.dl;
    if (box.lo.x < lo - tol || box.lo.y < lo - tol || box.hi.x > hi_x + tol || box.hi.y > hi_y + tol) {
        std::ostringstream os;
        os << "curve bounding box [" << box.lo.x << ", " << box.hi.x << "] x [" << box.lo.y << ", " << box.hi.y
           << "] leaves less than one cell of margin in a " << mesh.nx << "x" << mesh.ny << " mesh with dl=" << mesh.dl;
        throw CurveOutOfBounds(os.str());
    }
}

namespace detail {

struct Hit {
    double alpha = 0.0;
    Point point;
    double arc = 0.0;
    Surface surface = Surface::Any;
};

/// (axis, j, i) so that a std::map walks the links row by row.
using LinkKey = std::tuple<int, int, int>;
using HitMap = std::map<LinkKey, std::vector<Hit>>;

inline LinkKey key_of(const LinkId& l) { return {static_cast<int>(l.axis), l.j, l.i}; }

inline LinkId link_of(const LinkKey& k) {
    return {std::get<2>(k), std::get<1>(k), std::get<0>(k) == 0 ? LinkAxis::X : LinkAxis::Y};
}

/// Records an intersection at `coord` along row/column `line`. A hit within the
/// snap distance of a node is recorded on both links meeting there, with
/// alpha exactly 0 or 1.
inline void add_hit(HitMap& hits, LinkAxis axis, int line, double coord, double dl, int n_along, Point p, double arc,
                    Surface surface) {
    const double u = coord / dl;
    const double nearest = std::round(u);
    auto put = [&](int k, double alpha) {
        if (k < 0 || k + 1 >= n_along) return;
        const LinkId id = axis == LinkAxis::X ? LinkId{k, line, LinkAxis::X} : LinkId{line, k, LinkAxis::Y};
        hits[key_of(id)].push_back({alpha, p, arc, surface});
    };
    if (std::abs(u - nearest) < snap_fraction) {
        const int node = static_cast<int>(nearest);
        put(node, 0.0);
        put(node - 1, 1.0);
        return;
    }
    const int k = static_cast<int>(std::floor(u));
    put(k, u - k);
}

struct Projection {
    double distance = 0.0;
    double arc = 0.0;
    Surface surface = Surface::Any;
};

/// Nearest point of a polyline to p.
inline Projection project(const Polyline& poly, const std::vector<double>& cumulative, Point p) {
    Projection best{std::numeric_limits<double>::infinity(), 0.0, Surface::Any};
    for (std::size_t k = 0; k < poly.segment_count(); ++k) {
        const Point a = poly.segment_start(k);
        const Point b = poly.segment_end(k);
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        const double t = len2 > 0.0 ? std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0) : 0.0;
        const double d = std::hypot(a.x + t * dx - p.x, a.y + t * dy - p.y);
        if (d < best.distance) {
            best = {d, cumulative[k] + t * std::sqrt(len2), k < poly.surface.size() ? poly.surface[k] : Surface::Any};
        }
    }
    return best;
}

/// Crossing number of a rightward ray from p.
inline bool inside_polygon(const Polyline& poly, Point p) {
    bool in = false;
    for (std::size_t k = 0; k < poly.segment_count(); ++k) {
        const Point a = poly.segment_start(k);
        const Point b = poly.segment_end(k);
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x > p.x) in = !in;
        }
    }
    return in;
}

struct Side {
    bool inside = false;
    bool on_curve = false;
};

class CurveQuery {
public:
    explicit CurveQuery(const Curve& curve) : curve_(curve) {
        if (const auto* poly = outline(curve)) polyline_length_before(*poly, 0, cumulative_);
    }

    /// Inside/outside of a closed curve; points within the snap distance of
    /// the curve count as inside.
    [[nodiscard]] Side side(Point p, double dl) const {
        const double tol = snap_fraction * dl;
        if (const auto* e = std::get_if<Ellipse>(&curve_)) {
            const double f = e->implicit(p);
            const double gx = 2.0 * (p.x - e->center.x) / (e->a * e->a);
            const double gy = 2.0 * (p.y - e->center.y) / (e->b * e->b);
            const double g = std::hypot(gx, gy);
            const bool on = g > 0.0 && std::abs(f) / g < tol;
            return {on || f < 0.0, on};
        }
        const Polyline& poly = *outline(curve_);
        const bool on = project(poly, cumulative_, p).distance < tol;
        return {on || inside_polygon(poly, p), on};
    }

    [[nodiscard]] double arc(Point p) const {
        if (const auto* e = std::get_if<Ellipse>(&curve_)) return ellipse_arc(*e, ellipse_angle(*e, p));
        return project(*outline(curve_), cumulative_, p).arc;
    }

    [[nodiscard]] Surface surface(Point p) const {
        if (const auto* e = std::get_if<Ellipse>(&curve_)) return p.y >= e->center.y ? Surface::Upper : Surface::Lower;
        return project(*outline(curve_), cumulative_, p).surface;
    }

    [[nodiscard]] const std::vector<double>& cumulative() const noexcept { return cumulative_; }

private:
    const Curve& curve_;
    std::vector<double> cumulative_;
};

inline std::size_t nearest_midpoint(const std::vector<Hit>& hits) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < hits.size(); ++k)
        if (std::abs(hits[k].alpha - 0.5) < std::abs(hits[best].alpha - 0.5)) best = k;
    return best;
}

}  // namespace detail

/// Crossings of the curve with the link lines, at most one per link, sorted
/// along the curve.
///
/// For a closed curve every node is classified inside or outside (nodes on the
/// curve count as inside) and exactly the links joining the two classes carry
/// a crossing, so the enclosed region is sealed whatever the curve does near
/// nodes. A link holding several intersections keeps the one nearest its
/// midpoint; a link whose ends agree but which the curve crosses twice (a
/// sub-cell sliver) keeps one as well. Touching contacts register nothing.
[[nodiscard]] inline CrossingLayout compute_crossings(const Curve& curve, const MeshDescriptor& mesh,
                                                      int material = 0) {
    if (mesh.nx < 2 || mesh.ny < 2 || !(mesh.dl > 0.0)) throw ConfigError("mesh", "invalid mesh descriptor");
    check_fits(curve, mesh);
    const double dl = mesh.dl;
    CrossingLayout layout;
    detail::CurveQuery query(curve);
    detail::HitMap hits;

    if (const auto* e = std::get_if<Ellipse>(&curve)) {
        for (int j = 0; j < mesh.ny; ++j) {
            const double y = j * dl;
            if (auto r = detail::ellipse_line_roots(*e, true, y, dl, layout.tangencies)) {
                for (double x : {r->first, r->second}) {
                    const Point p{x, y};
                    detail::add_hit(hits, LinkAxis::X, j, x, dl, mesh.nx, p, query.arc(p), query.surface(p));
                }
            }
        }
        for (int i = 0; i < mesh.nx; ++i) {
            const double x = i * dl;
            if (auto r = detail::ellipse_line_roots(*e, false, x, dl, layout.tangencies)) {
                for (double y : {r->first, r->second}) {
                    const Point p{x, y};
                    detail::add_hit(hits, LinkAxis::Y, i, y, dl, mesh.ny, p, query.arc(p), query.surface(p));
                }
            }
        }
    } else {
        const Polyline& poly = *outline(curve);
        const auto& cumulative = query.cumulative();
        for (std::size_t k = 0; k < poly.segment_count(); ++k) {
            const Point a = poly.segment_start(k);
            const Point b = poly.segment_end(k);
            const double len = std::hypot(b.x - a.x, b.y - a.y);
            const double arc0 = cumulative[k];
            const Surface surf = k < poly.surface.size() ? poly.surface[k] : Surface::Any;
            // Half-open rule: a line through a vertex is counted for exactly one
            // of the two segments meeting there, or for neither when the curve
            // only touches it.
            const int j_lo = static_cast<int>(std::ceil(std::min(a.y, b.y) / dl));
            const int j_hi = static_cast<int>(std::floor(std::max(a.y, b.y) / dl));
            for (int j = std::max(j_lo, 0); j <= std::min(j_hi, mesh.ny - 1); ++j) {
                const double y = j * dl;
                if ((a.y < y) == (b.y < y)) continue;
                const double t = (y - a.y) / (b.y - a.y);
                const Point p{a.x + t * (b.x - a.x), y};
                detail::add_hit(hits, LinkAxis::X, j, p.x, dl, mesh.nx, p, arc0 + t * len, surf);
            }
            const int i_lo = static_cast<int>(std::ceil(std::min(a.x, b.x) / dl));
            const int i_hi = static_cast<int>(std::floor(std::max(a.x, b.x) / dl));
            for (int i = std::max(i_lo, 0); i <= std::min(i_hi, mesh.nx - 1); ++i) {
                const double x = i * dl;
                if ((a.x < x) == (b.x < x)) continue;
                const double t = (x - a.x) / (b.x - a.x);
                const Point p{x, a.y + t * (b.y - a.y)};
                detail::add_hit(hits, LinkAxis::Y, i, p.y, dl, mesh.ny, p, arc0 + t * len, surf);
            }
        }
    }

    auto emit = [&](const LinkId& link, const detail::Hit& h) {
        CrossingSeed seed;
        seed.link = link;
        seed.alpha = h.alpha;
        seed.material = material;
        seed.point = h.point;
        seed.arc = h.arc;
        seed.surface = h.surface;
        layout.seeds.push_back(seed);
    };
    auto interior = [](const std::vector<detail::Hit>& list) {
        std::vector<detail::Hit> out;
        for (const auto& h : list)
            if (h.alpha > 0.0 && h.alpha < 1.0) out.push_back(h);
        return out;
    };

    if (!is_closed(curve)) {
        for (const auto& [key, list] : hits) {
            layout.merged += static_cast<int>(list.size()) - 1;
            emit(detail::link_of(key), list[detail::nearest_midpoint(list)]);
        }
    } else {
        // Classify the nodes of the bounding box; everything else is outside.
        const auto box = bounding_box(curve);
        const int i0 = std::max(0, static_cast<int>(std::floor(box.lo.x / dl)) - 1);
        const int i1 = std::min(mesh.nx - 1, static_cast<int>(std::ceil(box.hi.x / dl)) + 1);
        const int j0 = std::max(0, static_cast<int>(std::floor(box.lo.y / dl)) - 1);
        const int j1 = std::min(mesh.ny - 1, static_cast<int>(std::ceil(box.hi.y / dl)) + 1);
        const int w = i1 - i0 + 1;
        std::vector<detail::Side> side(static_cast<std::size_t>(w) * static_cast<std::size_t>(j1 - j0 + 1));
        auto at = [&](int i, int j) -> detail::Side& {
            return side[static_cast<std::size_t>(j - j0) * static_cast<std::size_t>(w) + static_cast<std::size_t>(i - i0)];
        };
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) at(i, j) = query.side({i * dl, j * dl}, dl);

        int orphans = 0;
        auto visit = [&](const LinkId& link, const detail::Side& a, const detail::Side& b, Point pa, Point pb) {
            const auto it = hits.find(detail::key_of(link));
            const std::vector<detail::Hit> none;
            const auto& all = it == hits.end() ? none : it->second;
            const auto inner = interior(all);
            if (a.inside != b.inside) {
                if (!inner.empty()) {
                    layout.merged += static_cast<int>(inner.size()) - 1;
                    emit(link, inner[detail::nearest_midpoint(inner)]);
                } else if (!all.empty()) {
                    emit(link, all[detail::nearest_midpoint(all)]);
                } else {
                    // The curve passes through an end node without crossing the link.
                    const bool lower = a.on_curve || !b.on_curve;
                    const Point p = lower ? pa : pb;
                    emit(link, {lower ? 0.0 : 1.0, p, query.arc(p), query.surface(p)});
                    if (!a.on_curve && !b.on_curve) ++orphans;
                }
            } else if (inner.size() >= 2) {
                layout.merged += static_cast<int>(inner.size()) - 1;
                emit(link, inner[detail::nearest_midpoint(inner)]);
            } else if (inner.size() == 1) {
                ++orphans;
            }
        };
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                const Point p{i * dl, j * dl};
                if (i + 1 <= i1) visit({i, j, LinkAxis::X}, at(i, j), at(i + 1, j), p, {(i + 1) * dl, j * dl});
                if (j + 1 <= j1) visit({i, j, LinkAxis::Y}, at(i, j), at(i, j + 1), p, {i * dl, (j + 1) * dl});
            }
        }
        if (orphans > 0) {
            layout.diagnostics.push_back(std::to_string(orphans) +
                                         " intersections disagreed with the node classification near the curve");
        }
    }

    std::sort(layout.seeds.begin(), layout.seeds.end(),
              [](const CrossingSeed& a, const CrossingSeed& b) { return a.arc < b.arc; });
    if (layout.merged > 0) {
        layout.diagnostics.push_back(std::to_string(layout.merged) +
                                     " extra intersections dropped on links crossed more than once");
    }

    // Chain connectivity: consecutive crossings along the curve must share a cell.
    const auto& s = layout.seeds;
    const double tol = 1.0 + 1e-9;
    const std::size_t n = s.size();
    const std::size_t pairs = is_closed(curve) ? n : (n > 0 ? n - 1 : 0);
    int gaps = 0;
    for (std::size_t k = 0; k < pairs && n > 1; ++k) {
        const auto& p = s[k];
        const auto& q = s[(k + 1) % n];
        if (std::abs(p.point.x - q.point.x) > tol * dl || std::abs(p.point.y - q.point.y) > tol * dl) ++gaps;
    }
    if (gaps > 0) {
        layout.connected = false;
        layout.diagnostics.push_back("MeshTooCoarse: " + std::to_string(gaps) +
                                     " consecutive crossing pairs do not share a cell");
    }
    return layout;
}

/// Throws MeshTooCoarse when the layout's crossing chain is broken.
inline void require_connected(const CrossingLayout& layout) {
    if (!layout.connected) {
        throw MeshTooCoarse(layout.diagnostics.empty() ? "crossing chain is not connected" : layout.diagnostics.back());
    }
}

/// Arc position of the point on `surface` whose x equals `x`, if any.
[[nodiscard]] inline std::optional<double> surface_arc_at(const Curve& curve, double x, Surface surface) {
    if (const auto* e = std::get_if<Ellipse>(&curve)) {
        const double u = (x - e->center.x) / e->a;
        if (std::abs(u) > 1.0) return std::nullopt;
        const double v = std::sqrt(std::max(0.0, 1.0 - u * u));
        const double y = e->center.y + (surface == Surface::Lower ? -v : v) * e->b;
        return detail::ellipse_arc(*e, detail::ellipse_angle(*e, {x, y}));
    }
    const Polyline& poly = *outline(curve);
    std::vector<double> cumulative;
    detail::polyline_length_before(poly, 0, cumulative);
    for (std::size_t k = 0; k < poly.segment_count(); ++k) {
        const Surface surf = k < poly.surface.size() ? poly.surface[k] : Surface::Any;
        if (surface != Surface::Any && surf != surface) continue;
        const Point a = poly.segment_start(k);
        const Point b = poly.segment_end(k);
        if (x < std::min(a.x, b.x) || x > std::max(a.x, b.x) || a.x == b.x) continue;
        const double t = (x - a.x) / (b.x - a.x);
        return cumulative[k] + t * std::hypot(b.x - a.x, b.y - a.y);
    }
    return std::nullopt;
}

struct GapResult {
    CrossingLayout layout;
    std::vector<CrossingSeed> removed;
    std::optional<std::string> warning;  ///< GapRemovesNothing
};

/// Opens a gap of `width` centred where `surface` passes x = center_x: drops
/// every crossing of that surface within width/2 of arc length from the centre.
[[nodiscard]] inline GapResult apply_gap(const CrossingLayout& layout, const Curve& curve, double center_x,
                                         double width, Surface surface) {
    if (width < 0.0) throw ConfigError("geometry.gap.width", "must be non-negative");
    GapResult out{layout, {}, std::nullopt};
    if (width == 0.0) return out;
    const auto centre = surface_arc_at(curve, center_x, surface);
    if (!centre) {
        throw ConfigError("geometry.gap.x", "selected surface does not pass x = " + std::to_string(center_x));
    }
    const double half = 0.5 * width * (1.0 + 1e-9);
    out.layout.seeds.clear();
    for (const auto& s : layout.seeds) {
        const bool on_surface = surface == Surface::Any || s.surface == surface;
        if (on_surface && std::abs(s.arc - *centre) <= half) {
            out.removed.push_back(s);
        } else {
            out.layout.seeds.push_back(s);
        }
    }
    if (out.removed.empty()) {
        out.warning = "GapRemovesNothing: a " + std::to_string(width) + " m gap at x = " + std::to_string(center_x) +
                      " contains no crossing; it is narrower than the link spacing there";
        out.layout.diagnostics.push_back(*out.warning);
    }
    return out;
}

/// Panel crossings for the engine from a layout and a material table.
[[nodiscard]] inline CrossingSet make_crossing_set(const MeshGrid& mesh, const std::vector<CrossingSeed>& seeds,
                                                   const std::vector<PanelMaterial>& materials,
                                                   int n_terms = default_truncation) {
    const LinkLine line{mesh.link_admittance(), mesh.link_speed()};
    std::vector<Crossing> list;
    list.reserve(seeds.size());
    for (const auto& s : seeds) {
        if (s.material < 0 || static_cast<std::size_t>(s.material) >= materials.size()) {
            throw ConfigError("crossing.material", "unknown material id " + std::to_string(s.material));
        }
        list.emplace_back(s.link, s.alpha, materials[static_cast<std::size_t>(s.material)], n_terms, mesh.dl(),
                          mesh.dt(), line);
    }
    return CrossingSet(mesh, std::move(list));
}

/// CSV: i,j,axis,alpha,material,x,y,arc,surface
inline void write_crossings_csv(std::ostream& os, const std::vector<CrossingSeed>& seeds) {
    os << "i,j,axis,alpha,material,x,y,arc,surface\n";
    os.precision(17);
    for (const auto& s : seeds) {
        os << s.link.i << ',' << s.link.j << ',' << (s.link.axis == LinkAxis::X ? 'x' : 'y') << ',' << s.alpha << ','
           << s.material << ',' << s.point.x << ',' << s.point.y << ',' << s.arc << ',' << to_string(s.surface)
           << '\n';
    }
}

[[nodiscard]] inline std::vector<CrossingSeed> read_crossings_csv(std::istream& is) {
    std::vector<CrossingSeed> seeds;
    std::string line;
    if (!std::getline(is, line)) return seeds;
    int row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5) throw ConfigError("crossings.csv", "row " + std::to_string(row) + " has too few columns");
        CrossingSeed s;
        try {
            s.link.i = std::stoi(cells[0]);
            s.link.j = std::stoi(cells[1]);
            if (cells[2] != "x" && cells[2] != "y") throw std::invalid_argument("axis");
            s.link.axis = cells[2] == "x" ? LinkAxis::X : LinkAxis::Y;
            s.alpha = std::stod(cells[3]);
            s.material = std::stoi(cells[4]);
            if (cells.size() >= 8) {
                s.point = {std::stod(cells[5]), std::stod(cells[6])};
                s.arc = std::stod(cells[7]);
            }
            if (cells.size() >= 9) {
                const auto& t = cells[8];
                s.surface = t == "upper" ? Surface::Upper
                            : t == "lower" ? Surface::Lower
                            : t == "trailing_edge" ? Surface::TrailingEdge
                                                   : Surface::Any;
            }
        } catch (const std::logic_error&) {
            throw ConfigError("crossings.csv", "row " + std::to_string(row) + " is malformed");
        }
        seeds.push_back(s);
    }
    return seeds;
}

}  // namespace curvetlm
