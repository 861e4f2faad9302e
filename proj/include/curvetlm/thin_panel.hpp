#pragma once

// Sub-cell model of a thin panel crossing a TLM link.
//
// The link is replaced by a chain  air(l1) | film(d) | air(l2)  driven at both
// ends by the Norton equivalents of the adjacent node ports (current 2*y_TL*V^r
// in parallel with y_TL). Each uniform layer contributes the two-port
//
//     [ -jY cot(theta)   jY csc(theta) ]
//     [  jY csc(theta)  -jY cot(theta) ]
//
// whose cot/csc are replaced by their truncated partial-fraction (Foster)
// expansions. Every term is a real first- or second-order rational function of
// s; the bilinear map s = (2/dt)(1 - z^-1)/(1 + z^-1) turns it into a digital
// section whose zero-delay gain goes into a constant coupling matrix G and
// whose state carries the history.
//
// Air layers use the link admittance and the link speed, so a vanishing film
// reduces to the unmodified link. The film uses its physical constitutive
// parameters: Y_t = sqrt(C/L), theta_t = omega d sqrt(LC) with
// L = mu + sigma_m/(j omega), C = eps + sigma_e/(j omega).

#include "curvetlm/constants.hpp"
#include "curvetlm/errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace curvetlm {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

inline constexpr int default_truncation = 24;

struct FilmMaterial {
    double eps_r = 1.0;
    double mu_r = 1.0;
    double sigma_e = 0.0;  // S/m
    double sigma_m = 0.0;  // ohm/m
    double thickness = 1e-3;  // m

    void validate() const {
        if (!(eps_r > 0.0)) throw ConfigError("material.eps_r", "must be positive");
        if (!(mu_r > 0.0)) throw ConfigError("material.mu_r", "must be positive");
        if (sigma_e < 0.0) throw ConfigError("material.sigma_e", "must be non-negative");
        if (sigma_m < 0.0) throw ConfigError("material.sigma_m", "must be non-negative");
        if (!(thickness > 0.0)) throw ConfigError("material.thickness", "must be positive");
    }

    [[nodiscard]] double eps() const noexcept { return eps_r * constants::eps0; }
    [[nodiscard]] double mu() const noexcept { return mu_r * constants::mu0; }

    /// L = mu + sigma_m / (j omega)
    [[nodiscard]] cplx series_l(double omega) const noexcept { return mu() + sigma_m / cplx(0.0, omega); }
    /// C = eps + sigma_e / (j omega)
    [[nodiscard]] cplx shunt_c(double omega) const noexcept { return eps() + sigma_e / cplx(0.0, omega); }

    static FilmMaterial vacuum(double thickness) { return FilmMaterial{1.0, 1.0, 0.0, 0.0, thickness}; }
};

/// Air lengths on either side of the film: l1 towards the port-4 (lower index)
/// node, l2 towards the port-2 node. A zero length removes that layer.
struct StackGeometry {
    double l1 = 0.0;
    double l2 = 0.0;
};

/// The host link: characteristic admittance y_TL and propagation speed dl/dt.
struct LinkLine {
    double admittance = 0.0;
    double speed = 0.0;
};

/// Lengths below this fraction of a link are treated as absent.
inline constexpr double degenerate_length_fraction = 1e-6;

/// Air lengths realised by the filters for a panel at fraction alpha = l1/dl.
///
/// Connect already delays every wave by one step, i.e. a half link out and a
/// half link back. The filters therefore carry only the remainder beyond the
/// link midpoint; the near side of an off-centre panel reflects at the midpoint
/// since a return earlier than one step cannot be represented causally.
[[nodiscard]] inline StackGeometry embedded_geometry(double alpha, double dl) noexcept {
    const double l1 = alpha * dl;
    const double l2 = (1.0 - alpha) * dl;
    StackGeometry g{std::max(l1 - 0.5 * dl, 0.0), std::max(l2 - 0.5 * dl, 0.0)};
    if (g.l1 < degenerate_length_fraction * dl) g.l1 = 0.0;
    if (g.l2 < degenerate_length_fraction * dl) g.l2 = 0.0;
    return g;
}

// -----------------------------------------------------------------------------
// Trigonometric building blocks
// -----------------------------------------------------------------------------

/// cot and csc of a complex argument, stable for large |Im theta|.
[[nodiscard]] inline std::pair<cplx, cplx> cot_csc(cplx theta) {
    const bool flip = theta.imag() < 0.0;
    const cplx t = flip ? -theta : theta;
    // Im t >= 0 so |e^{it}| <= 1.
    const cplx e1 = std::exp(cplx(0.0, 1.0) * t);
    const cplx w = e1 * e1;
    const cplx den = w - 1.0;
    if (std::abs(den) < 1e-13) {
        throw SingularAtResonance("cot/csc pole at theta = " + std::to_string(theta.real()));
    }
    cplx cot = cplx(0.0, 1.0) * (w + 1.0) / den;
    cplx csc = cplx(0.0, 2.0) * e1 / den;
    if (flip) {
        cot = -cot;
        csc = -csc;
    }
    return {cot, csc};
}

/// Partial sums of the cot and csc expansions:
///   cot t ~ 1/t + 2t sum_{k=1..N} 1/(t^2 - k^2 pi^2)
///   csc t ~ 1/t + 2t sum_{k=1..N} (-1)^k/(t^2 - k^2 pi^2)
[[nodiscard]] inline std::pair<cplx, cplx> cot_csc_series(cplx theta, int n_terms) {
    cplx s_cot = 0.0;
    cplx s_csc = 0.0;
    const cplx t2 = theta * theta;
    for (int k = 1; k <= n_terms; ++k) {
        const double kp = k * constants::pi;
        const cplx term = 1.0 / (t2 - kp * kp);
        s_cot += term;
        s_csc += (k % 2 == 0 ? 1.0 : -1.0) * term;
    }
    return {1.0 / theta + 2.0 * theta * s_cot, 1.0 / theta + 2.0 * theta * s_csc};
}

// -----------------------------------------------------------------------------
// Layers
// -----------------------------------------------------------------------------

/// Uniform air section of the host link.
struct AirLayer {
    double admittance = 0.0;
    double delay = 0.0;  // length / link speed, s
};

using Layer = std::variant<AirLayer, FilmMaterial>;

/// Self and mutual admittances of a uniform layer, (-jY cot theta, jY csc theta).
/// With `n_terms` the truncated expansions are used instead of the closed forms.
[[nodiscard]] inline std::pair<cplx, cplx> layer_admittance(const Layer& layer, double omega,
                                                            std::optional<int> n_terms = std::nullopt) {
    const cplx j(0.0, 1.0);
    // Y/theta and Y*theta are branch-free; theta itself only enters squared or
    // through the product Y*cot(theta), which is invariant under the sign of the root.
    cplx y_over_theta;
    cplx y_times_theta;
    cplx theta;
    cplx y;
    if (const auto* air = std::get_if<AirLayer>(&layer)) {
        theta = omega * air->delay;
        y = air->admittance;
        y_over_theta = air->admittance / (omega * air->delay);
        y_times_theta = air->admittance * omega * air->delay;
    } else {
        const auto& film = std::get<FilmMaterial>(layer);
        const cplx l = film.series_l(omega);
        const cplx c = film.shunt_c(omega);
        const cplx root = std::sqrt(l * c);
        theta = omega * film.thickness * root;
        y = root / l;
        y_over_theta = 1.0 / (omega * film.thickness * l);
        y_times_theta = omega * film.thickness * c;
    }
    if (!n_terms) {
        if (std::abs(theta) < 1e-300) throw SingularAtResonance("zero electrical length");
        const auto [cot, csc] = cot_csc(theta);
        return {-j * y * cot, j * y * csc};
    }
    const cplx t2 = theta * theta;
    cplx s_cot = 0.0;
    cplx s_csc = 0.0;
    for (int k = 1; k <= *n_terms; ++k) {
        const double kp = k * constants::pi;
        const cplx d = t2 - kp * kp;
        if (std::abs(d) < 1e-12 * kp * kp) {
            throw SingularAtResonance("truncated expansion pole k = " + std::to_string(k));
        }
        s_cot += 1.0 / d;
        s_csc += (k % 2 == 0 ? 1.0 : -1.0) / d;
    }
    return {-j * (y_over_theta + 2.0 * y_times_theta * s_cot), j * (y_over_theta + 2.0 * y_times_theta * s_csc)};
}

/// Input admittance of a short-circuited link remnant of the given length: -j y cot(omega l / v).
[[nodiscard]] inline cplx stub_admittance(double length, double omega, const LinkLine& link) {
    if (!(length > 0.0)) throw ConfigError("stub.length", "must be positive");
    return layer_admittance(AirLayer{link.admittance, length / link.speed}, omega).first;
}

// -----------------------------------------------------------------------------
// Rational sections
// -----------------------------------------------------------------------------

/// Real-coefficient analog section N(s)/D(s), coefficients in ascending powers of s.
/// FirstOrder: (n0 + n1 s)/(d0 + d1 s), an integrator when d0 = 0.
/// SecondOrder: (n0 + n1 s + n2 s^2)/(d0 + d1 s + d2 s^2).
struct RationalSection {
    enum class Kind { FirstOrder, SecondOrder };
    Kind kind = Kind::FirstOrder;
    std::array<double, 3> num{};
    std::array<double, 3> den{};

    [[nodiscard]] int order() const noexcept { return kind == Kind::FirstOrder ? 1 : 2; }

    [[nodiscard]] cplx operator()(cplx s) const noexcept {
        return (num[0] + s * (num[1] + s * num[2])) / (den[0] + s * (den[1] + s * den[2]));
    }

    [[nodiscard]] RationalSection negated() const noexcept {
        RationalSection r = *this;
        for (double& v : r.num) v = -v;
        return r;
    }
};

/// Sign relating the k-th term of the csc expansion to the k-th cot term:
/// the mutual admittance is sum_k coupling_sign(k) * (self term k).
[[nodiscard]] constexpr double coupling_sign(int k) noexcept { return k % 2 == 0 ? -1.0 : 1.0; }

/// Sections whose sum at s = j omega is the truncated -jY cot(theta) of the layer.
/// Term 0 is the 1/theta part; terms 1..N come from the k-th partial fraction.
[[nodiscard]] inline std::vector<RationalSection> expand_cot(const Layer& layer, int n_terms) {
    if (n_terms < 1) throw ConfigError("panel.truncation", "need at least one expansion term");
    std::vector<RationalSection> out;
    out.reserve(static_cast<std::size_t>(n_terms) + 1);
    using K = RationalSection::Kind;
    if (const auto* air = std::get_if<AirLayer>(&layer)) {
        const double tau = air->delay;
        const double y = air->admittance;
        if (!(tau > 0.0)) throw ConfigError("layer.delay", "degenerate air layer has no expansion");
        // y/(s tau)
        out.push_back({K::FirstOrder, {y / tau, 0.0, 0.0}, {0.0, 1.0, 0.0}});
        for (int k = 1; k <= n_terms; ++k) {
            // 2 y tau s / (s^2 tau^2 + k^2 pi^2)
            const double w = k * constants::pi / tau;
            out.push_back({K::SecondOrder, {0.0, 2.0 * y / tau, 0.0}, {w * w, 0.0, 1.0}});
        }
    } else {
        const auto& f = std::get<FilmMaterial>(layer);
        const double d = f.thickness;
        const double mu = f.mu();
        const double eps = f.eps();
        // 1 / (d (s mu + sigma_m))
        out.push_back({K::FirstOrder, {1.0 / (d * mu), 0.0, 0.0}, {f.sigma_m / mu, 1.0, 0.0}});
        for (int k = 1; k <= n_terms; ++k) {
            // 2 d (s eps + sigma_e) / (d^2 (s mu + sigma_m)(s eps + sigma_e) + k^2 pi^2), monic denominator
            const double kp = k * constants::pi;
            const double norm = d * d * mu * eps;
            out.push_back({K::SecondOrder,
                           {2.0 * d * f.sigma_e / norm, 2.0 * d * eps / norm, 0.0},
                           {(d * d * f.sigma_m * f.sigma_e + kp * kp) / norm, f.sigma_e / eps + f.sigma_m / mu, 1.0}});
        }
    }
    return out;
}

/// Sections whose sum at s = j omega is the truncated jY csc(theta) of the layer.
[[nodiscard]] inline std::vector<RationalSection> expand_csc(const Layer& layer, int n_terms) {
    auto out = expand_cot(layer, n_terms);
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (coupling_sign(static_cast<int>(k)) < 0.0) out[k] = out[k].negated();
    }
    return out;
}

/// Bilinear image of an analog section, normalised so that a0 = 1:
/// H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct DiscreteSection {
    int order = 1;
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    [[nodiscard]] cplx operator()(cplx z) const noexcept {
        const cplx zi = 1.0 / z;
        return (b0 + zi * (b1 + zi * b2)) / (1.0 + zi * (a1 + zi * a2));
    }

    [[nodiscard]] std::vector<cplx> poles() const {
        if (order == 1) return {cplx(-a1, 0.0)};
        const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
        return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
    }
};

[[nodiscard]] inline DiscreteSection bilinear(const RationalSection& r, double dt) {
    const double k = 2.0 / dt;
    DiscreteSection d;
    d.order = r.order();
    double a0 = 0.0;
    if (r.kind == RationalSection::Kind::FirstOrder) {
        d.b0 = r.num[0] + r.num[1] * k;
        d.b1 = r.num[0] - r.num[1] * k;
        a0 = r.den[0] + r.den[1] * k;
        d.a1 = r.den[0] - r.den[1] * k;
    } else {
        const double k2 = k * k;
        d.b0 = r.num[0] + r.num[1] * k + r.num[2] * k2;
        d.b1 = 2.0 * r.num[0] - 2.0 * r.num[2] * k2;
        d.b2 = r.num[0] - r.num[1] * k + r.num[2] * k2;
        a0 = r.den[0] + r.den[1] * k + r.den[2] * k2;
        d.a1 = 2.0 * r.den[0] - 2.0 * r.den[2] * k2;
        d.a2 = r.den[0] - r.den[1] * k + r.den[2] * k2;
    }
    if (a0 == 0.0) throw UnstableSection("bilinear image has a pole at z = infinity");
    d.b0 /= a0;
    d.b1 /= a0;
    d.b2 /= a0;
    d.a1 /= a0;
    d.a2 /= a0;
    return d;
}

// -----------------------------------------------------------------------------
// Frequency-domain chain
// -----------------------------------------------------------------------------

/// Ordered layers of a stack with their chain-node endpoints. Chain node 0 is
/// the port-4 terminal, the last chain node the port-2 terminal; -1 is ground.
struct ChainLayer {
    Layer layer;
    int from = 0;
    int to = 0;
};

struct Chain {
    int nodes = 0;
    std::vector<int> terminals;
    std::vector<ChainLayer> layers;
};

[[nodiscard]] inline Chain stack_chain(const StackGeometry& geom, const FilmMaterial& film, const LinkLine& link) {
    if (geom.l1 < 0.0 || geom.l2 < 0.0) throw ConfigError("stack", "air lengths must be non-negative");
    film.validate();
    Chain c;
    int node = 0;
    if (geom.l1 > 0.0) {
        c.layers.push_back({AirLayer{link.admittance, geom.l1 / link.speed}, node, node + 1});
        ++node;
    }
    c.layers.push_back({film, node, node + 1});
    ++node;
    if (geom.l2 > 0.0) {
        c.layers.push_back({AirLayer{link.admittance, geom.l2 / link.speed}, node, node + 1});
        ++node;
    }
    c.nodes = node + 1;
    c.terminals = {0, node};
    return c;
}

[[nodiscard]] inline Chain stub_chain(double length, const LinkLine& link) {
    if (!(length > 0.0)) throw ConfigError("stub.length", "must be positive");
    Chain c;
    c.nodes = 1;
    c.terminals = {0};
    c.layers.push_back({AirLayer{link.admittance, length / link.speed}, 0, -1});
    return c;
}

namespace detail {

inline void stamp(CMatrix& y, int p, int q, cplx self, cplx mutual) {
    y(p, p) += self;
    if (q >= 0) {
        y(q, q) += self;
        y(p, q) += mutual;
        y(q, p) += mutual;
    }
}

inline CMatrix chain_admittance(const Chain& chain, double omega, double y_tl, std::optional<int> n_terms) {
    if (!(omega > 0.0)) throw ConfigError("omega", "must be positive");
    CMatrix y = CMatrix::Zero(chain.nodes, chain.nodes);
    for (int t : chain.terminals) y(t, t) += y_tl;
    for (const auto& cl : chain.layers) {
        const auto [self, mutual] = layer_admittance(cl.layer, omega, n_terms);
        stamp(y, cl.from, cl.to, self, mutual);
    }
    return y;
}

}  // namespace detail

/// Nodal admittance matrix of the driven stack at angular frequency omega,
/// relating (I4, 0, 0, I2) to (V4, Va, Vb, V2). The port terminations y_TL are
/// included on the terminal diagonal. Absent air layers drop their chain node.
/// `n_terms` selects the truncated expansion instead of the closed forms.
[[nodiscard]] inline CMatrix stack_admittance(const StackGeometry& geom, const FilmMaterial& film, double omega,
                                              const LinkLine& link, std::optional<int> n_terms = std::nullopt) {
    return detail::chain_admittance(stack_chain(geom, film, link), omega, link.admittance, n_terms);
}

/// Reduce a terminated nodal matrix to its terminal ports and return the
/// scattering matrix referenced to y_TL (terminations removed first).
[[nodiscard]] inline CMatrix terminal_scattering(const CMatrix& y_full, const std::vector<int>& terminals,
                                                 double y_tl) {
    const int n = static_cast<int>(y_full.rows());
    const int m = static_cast<int>(terminals.size());
    std::vector<int> internal;
    for (int i = 0; i < n; ++i) {
        if (std::find(terminals.begin(), terminals.end(), i) == terminals.end()) internal.push_back(i);
    }
    CMatrix ytt(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) ytt(a, b) = y_full(terminals[a], terminals[b]);
    ytt -= y_tl * CMatrix::Identity(m, m);
    if (!internal.empty()) {
        const int k = static_cast<int>(internal.size());
        CMatrix yti(m, k), yit(k, m), yii(k, k);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < k; ++b) {
                yti(a, b) = y_full(terminals[a], internal[b]);
                yit(b, a) = y_full(internal[b], terminals[a]);
            }
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) yii(a, b) = y_full(internal[a], internal[b]);
        ytt -= yti * yii.partialPivLu().solve(yit);
    }
    const CMatrix id = CMatrix::Identity(m, m);
    return (y_tl * id - ytt) * (y_tl * id + ytt).inverse();
}

/// Waves returned to the ports, (V4^i, V2^i), for launched waves (V4^r, V2^r)
/// given the terminated nodal matrix of a two-terminal chain.
[[nodiscard]] inline std::pair<cplx, cplx> returned_waves(const CMatrix& y_full, double y_tl, cplx v4r, cplx v2r) {
    const int n = static_cast<int>(y_full.rows());
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
    rhs(0) += 2.0 * y_tl * v4r;
    rhs(n - 1) += 2.0 * y_tl * v2r;
    const Eigen::VectorXcd v = y_full.partialPivLu().solve(rhs);
    return {v(0) - v4r, v(n - 1) - v2r};
}

// -----------------------------------------------------------------------------
// Time-domain filter bank
// -----------------------------------------------------------------------------

enum class SolveMode { Direct, GaussSeidel };

/// One digital section of a layer: input u = V[p] + sign * V[q] (V[q] = 0 for
/// ground), output current y injected into p and sign * y into q.
struct BankSection {
    DiscreteSection coeffs;
    int p = 0;
    int q = -1;
    double sign = 1.0;
    int layer = 0;
    int term = 0;
    double s1 = 0.0;
    double s2 = 0.0;
};

class FilterBank {
public:
    static constexpr int max_nodes = 4;

    FilterBank() = default;

    [[nodiscard]] int nodes() const noexcept { return nodes_; }
    [[nodiscard]] const std::vector<int>& terminals() const noexcept { return terminals_; }
    [[nodiscard]] double link_admittance() const noexcept { return y_tl_; }
    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] const std::vector<BankSection>& sections() const noexcept { return sections_; }
    [[nodiscard]] Eigen::MatrixXd coupling() const {
        Eigen::MatrixXd g(nodes_, nodes_);
        for (int r = 0; r < nodes_; ++r)
            for (int c = 0; c < nodes_; ++c) g(r, c) = g_[r * max_nodes + c];
        return g;
    }

    [[nodiscard]] std::size_t state_count() const noexcept {
        std::size_t n = 0;
        for (const auto& s : sections_) n += static_cast<std::size_t>(s.coeffs.order);
        return n;
    }

    void set_solve_mode(SolveMode mode) noexcept { mode_ = mode; }
    [[nodiscard]] SolveMode solve_mode() const noexcept { return mode_; }
    [[nodiscard]] int last_sweeps() const noexcept { return last_sweeps_; }

    void reset() noexcept {
        for (auto& s : sections_) s.s1 = s.s2 = 0.0;
        v_.fill(0.0);
    }

    /// Discrete nodal matrix Y(z) including the terminal y_TL.
    [[nodiscard]] CMatrix response(cplx z) const {
        CMatrix y = CMatrix::Zero(nodes_, nodes_);
        for (int t : terminals_) y(t, t) += y_tl_;
        for (const auto& s : sections_) {
            const cplx h = s.coeffs(z);
            detail::stamp(y, s.p, s.q, h, s.sign * h);
        }
        return y;
    }

    /// Response on the unit circle at angular frequency omega.
    [[nodiscard]] CMatrix response_at(double omega) const { return response(std::polar(1.0, omega * dt_)); }

    [[nodiscard]] std::vector<cplx> poles() const {
        std::vector<cplx> out;
        for (const auto& s : sections_) {
            auto p = s.coeffs.poles();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }

    /// One time step of a two-terminal bank: waves launched towards the panel
    /// in, returned waves (V4^i, V2^i) out.
    std::pair<double, double> step(double v4r, double v2r) noexcept {
        std::array<double, max_nodes> rhs{};
        rhs[static_cast<std::size_t>(terminals_.front())] += 2.0 * y_tl_ * v4r;
        rhs[static_cast<std::size_t>(terminals_.back())] += 2.0 * y_tl_ * v2r;
        solve_and_update(rhs);
        return {v_[static_cast<std::size_t>(terminals_.front())] - v4r,
                v_[static_cast<std::size_t>(terminals_.back())] - v2r};
    }

    /// One time step of a one-terminal (stub) bank.
    double step(double vr) noexcept {
        std::array<double, max_nodes> rhs{};
        rhs[0] = 2.0 * y_tl_ * vr;
        solve_and_update(rhs);
        return v_[0] - vr;
    }

    /// Build from a chain: expand every layer, discretise, accumulate the
    /// zero-delay gains into G and keep the rest as section state.
    static FilterBank synthesize(const Chain& chain, int n_terms, double dt, double y_tl) {
        if (!(dt > 0.0)) throw ConfigError("dt", "time step must be positive");
        if (chain.nodes < 1 || chain.nodes > max_nodes) throw ConfigError("stack", "unsupported chain size");
        FilterBank bank;
        bank.nodes_ = chain.nodes;
        bank.terminals_ = chain.terminals;
        bank.y_tl_ = y_tl;
        bank.dt_ = dt;
        std::array<double, max_nodes * max_nodes> g{};
        for (int t : chain.terminals) g[t * max_nodes + t] += y_tl;
        int layer_index = 0;
        for (const auto& cl : chain.layers) {
            const auto terms = expand_cot(cl.layer, n_terms);
            for (std::size_t k = 0; k < terms.size(); ++k) {
                BankSection s;
                s.coeffs = bilinear(terms[k], dt);
                for (const cplx& pole : s.coeffs.poles()) {
                    if (std::abs(pole) > 1.0 + 1e-12) {
                        throw UnstableSection("discrete pole |z| = " + std::to_string(std::abs(pole)) + " in layer " +
                                              std::to_string(layer_index) + " term " + std::to_string(k));
                    }
                }
                s.p = cl.from;
                s.q = cl.to;
                s.sign = coupling_sign(static_cast<int>(k));
                s.layer = layer_index;
                s.term = static_cast<int>(k);
                const double b0 = s.coeffs.b0;
                g[s.p * max_nodes + s.p] += b0;
                if (s.q >= 0) {
                    g[s.q * max_nodes + s.q] += b0;
                    g[s.p * max_nodes + s.q] += s.sign * b0;
                    g[s.q * max_nodes + s.p] += s.sign * b0;
                }
                bank.sections_.push_back(s);
            }
            ++layer_index;
        }
        bank.g_ = g;
        Eigen::MatrixXd gm = bank.coupling();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gm);
        if (!lu.isInvertible() || lu.rcond() < 1e-14) {
            throw SingularCoupling("instantaneous coupling matrix is singular");
        }
        const Eigen::MatrixXd inv = lu.inverse();
        for (int r = 0; r < bank.nodes_; ++r)
            for (int c = 0; c < bank.nodes_; ++c) bank.ginv_[r * max_nodes + c] = inv(r, c);
        return bank;
    }

private:
    void solve_and_update(std::array<double, max_nodes>& rhs) noexcept {
        for (const auto& s : sections_) {
            rhs[static_cast<std::size_t>(s.p)] -= s.s1;
            if (s.q >= 0) rhs[static_cast<std::size_t>(s.q)] -= s.sign * s.s1;
        }
        if (mode_ == SolveMode::Direct) {
            std::array<double, max_nodes> v{};
            for (int r = 0; r < nodes_; ++r) {
                double acc = 0.0;
                for (int c = 0; c < nodes_; ++c) acc += ginv_[r * max_nodes + c] * rhs[c];
                v[r] = acc;
            }
            v_ = v;
        } else {
            gauss_seidel(rhs);
        }
        for (auto& s : sections_) {
            const double u = v_[static_cast<std::size_t>(s.p)] + (s.q >= 0 ? s.sign * v_[static_cast<std::size_t>(s.q)] : 0.0);
            const auto& c = s.coeffs;
            const double y = c.b0 * u + s.s1;
            s.s1 = c.b1 * u - c.a1 * y + s.s2;
            s.s2 = c.b2 * u - c.a2 * y;
        }
    }

    void gauss_seidel(const std::array<double, max_nodes>& rhs) noexcept {
        constexpr double tol = 1e-12;
        constexpr int max_sweeps = 200;
        int sweep = 0;
        for (; sweep < max_sweeps; ++sweep) {
            double change = 0.0;
            double scale = 0.0;
            for (int r = 0; r < nodes_; ++r) {
                double acc = rhs[r];
                for (int c = 0; c < nodes_; ++c) {
                    if (c != r) acc -= g_[r * max_nodes + c] * v_[c];
                }
                const double next = acc / g_[r * max_nodes + r];
                change = std::max(change, std::abs(next - v_[r]));
                scale = std::max(scale, std::abs(next));
                v_[r] = next;
            }
            if (change <= tol * std::max(scale, 1e-300)) {
                ++sweep;
                break;
            }
        }
        last_sweeps_ = sweep;
    }

    int nodes_ = 0;
    std::vector<int> terminals_;
    double y_tl_ = 0.0;
    double dt_ = 0.0;
    std::vector<BankSection> sections_;
    std::array<double, max_nodes * max_nodes> g_{};
    std::array<double, max_nodes * max_nodes> ginv_{};
    std::array<double, max_nodes> v_{};
    SolveMode mode_ = SolveMode::Direct;
    int last_sweeps_ = 0;
};

/// Filter bank of a film stack.
[[nodiscard]] inline FilterBank synthesize_filters(const StackGeometry& geom, const FilmMaterial& film, int n_terms,
                                                   double dt, const LinkLine& link) {
    return FilterBank::synthesize(stack_chain(geom, film, link), n_terms, dt, link.admittance);
}

/// Filter bank of a short-circuited remnant line (one terminal).
[[nodiscard]] inline FilterBank synthesize_stub(double length, int n_terms, double dt, const LinkLine& link) {
    return FilterBank::synthesize(stub_chain(length, link), n_terms, dt, link.admittance);
}

/// CSV audit of the section coefficients and pole locations of one bank.
/// `kind` labels the bank within its crossing (film, lower_stub, upper_stub).
inline void write_bank_csv(std::ostream& os, const FilterBank& bank, int crossing_id, bool header,
                           std::string_view kind = "film") {
    if (header) {
        os << "crossing,bank,layer,term,p,q,sign,order,b0,b1,b2,a1,a2,pole1_re,pole1_im,pole2_re,pole2_im\n";
    }
    os.precision(17);
    for (const auto& s : bank.sections()) {
        const auto poles = s.coeffs.poles();
        os << crossing_id << ',' << kind << ',' << s.layer << ',' << s.term << ',' << s.p << ',' << s.q << ',' << s.sign << ','
           << s.coeffs.order << ',' << s.coeffs.b0 << ',' << s.coeffs.b1 << ',' << s.coeffs.b2 << ',' << s.coeffs.a1
           << ',' << s.coeffs.a2 << ',' << poles[0].real() << ',' << poles[0].imag() << ',';
        if (poles.size() > 1) {
            os << poles[1].real() << ',' << poles[1].imag();
        } else {
            os << ',';
        }
        os << '\n';
    }
}

}  // namespace curvetlm
