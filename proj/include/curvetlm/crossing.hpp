#pragma once

// A panel crossing a link line, and the set of all crossings in a mesh.

#include "curvetlm/errors.hpp"
#include "curvetlm/mesh.hpp"
#include "curvetlm/thin_panel.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace curvetlm {

enum class LinkAxis { X, Y };

/// A link identified by its lower-index node: an X link joins (i, j) to
/// (i+1, j), a Y link joins (i, j) to (i, j+1).
struct LinkId {
    int i = 0;
    int j = 0;
    LinkAxis axis = LinkAxis::X;

    friend bool operator==(const LinkId&, const LinkId&) = default;
};

[[nodiscard]] inline std::string to_string(const LinkId& l) {
    return std::string(l.axis == LinkAxis::X ? "x" : "y") + "(" + std::to_string(l.i) + "," + std::to_string(l.j) + ")";
}

/// Perfect conductor marker.
struct Pec {};

using PanelMaterial = std::variant<FilmMaterial, Pec>;

class Crossing {
public:
    /// alpha = l1/dl is measured from the lower-index node.
    Crossing(LinkId link, double alpha, PanelMaterial material, int n_terms, double dl, double dt, const LinkLine& line)
        : link_(link), alpha_(alpha), material_(std::move(material)), n_terms_(n_terms) {
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            throw ConfigError("crossing.alpha", "split fraction must lie in [0, 1], got " + std::to_string(alpha));
        }
        physical_ = StackGeometry{alpha * dl, (1.0 - alpha) * dl};
        embedded_ = embedded_geometry(alpha, dl);
        if (const auto* film = std::get_if<FilmMaterial>(&material_)) {
            film_bank_ = synthesize_filters(embedded_, *film, n_terms, dt, line);
        } else {
            if (embedded_.l1 > 0.0) lower_stub_ = synthesize_stub(embedded_.l1, n_terms, dt, line);
            if (embedded_.l2 > 0.0) upper_stub_ = synthesize_stub(embedded_.l2, n_terms, dt, line);
        }
    }

    [[nodiscard]] const LinkId& link() const noexcept { return link_; }
    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] const StackGeometry& physical_geometry() const noexcept { return physical_; }
    [[nodiscard]] const StackGeometry& embedded() const noexcept { return embedded_; }
    [[nodiscard]] const PanelMaterial& material() const noexcept { return material_; }
    [[nodiscard]] int truncation() const noexcept { return n_terms_; }
    [[nodiscard]] bool is_pec() const noexcept { return std::holds_alternative<Pec>(material_); }

    [[nodiscard]] const std::optional<FilterBank>& film_bank() const noexcept { return film_bank_; }
    [[nodiscard]] const std::optional<FilterBank>& lower_stub() const noexcept { return lower_stub_; }
    [[nodiscard]] const std::optional<FilterBank>& upper_stub() const noexcept { return upper_stub_; }

    void set_solve_mode(SolveMode mode) noexcept {
        if (film_bank_) film_bank_->set_solve_mode(mode);
        if (lower_stub_) lower_stub_->set_solve_mode(mode);
        if (upper_stub_) upper_stub_->set_solve_mode(mode);
    }

    void reset() noexcept {
        if (film_bank_) film_bank_->reset();
        if (lower_stub_) lower_stub_->reset();
        if (upper_stub_) upper_stub_->reset();
    }

    /// Waves launched towards the panel by the lower and upper node in, waves
    /// returned to them (incident at the next step) out.
    std::pair<double, double> step(double lower_r, double upper_r) noexcept {
        if (film_bank_) return film_bank_->step(lower_r, upper_r);
        const double lo = lower_stub_ ? lower_stub_->step(lower_r) : -lower_r;
        const double hi = upper_stub_ ? upper_stub_->step(upper_r) : -upper_r;
        return {lo, hi};
    }

private:
    LinkId link_;
    double alpha_;
    PanelMaterial material_;
    int n_terms_;
    StackGeometry physical_;
    StackGeometry embedded_;
    std::optional<FilterBank> film_bank_;
    std::optional<FilterBank> lower_stub_;
    std::optional<FilterBank> upper_stub_;
};

/// All crossings of a mesh with a per-link ownership table.
class CrossingSet {
public:
    CrossingSet() = default;

    CrossingSet(const MeshGrid& mesh, std::vector<Crossing> crossings)
        : nx_(mesh.nx()), ny_(mesh.ny()), crossings_(std::move(crossings)) {
        const auto n = static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
        x_owner_.assign(n, -1);
        y_owner_.assign(n, -1);
        for (std::size_t k = 0; k < crossings_.size(); ++k) {
            const auto& l = crossings_[k].link();
            const bool interior = l.axis == LinkAxis::X ? (l.i >= 0 && l.i + 1 < nx_ && l.j >= 0 && l.j < ny_)
                                                        : (l.j >= 0 && l.j + 1 < ny_ && l.i >= 0 && l.i < nx_);
            if (!interior) throw CrossingOnBoundary("crossing on outer or out-of-mesh link " + to_string(l));
            auto& owner = l.axis == LinkAxis::X ? x_owner_ : y_owner_;
            auto& slot = owner[static_cast<std::size_t>(l.j) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(l.i)];
            if (slot >= 0) throw ConfigError("crossings", "duplicate crossing on link " + to_string(l));
            slot = static_cast<int>(k);
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return crossings_.size(); }
    /// True for an empty set or one built for a mesh of this size.
    [[nodiscard]] bool fits(const MeshGrid& mesh) const noexcept {
        return crossings_.empty() || (nx_ == mesh.nx() && ny_ == mesh.ny());
    }
    [[nodiscard]] bool empty() const noexcept { return crossings_.empty(); }
    [[nodiscard]] std::vector<Crossing>& crossings() noexcept { return crossings_; }
    [[nodiscard]] const std::vector<Crossing>& crossings() const noexcept { return crossings_; }

    /// Index of the crossing owning the link, or -1 for a plain link.
    [[nodiscard]] int owner(int i, int j, LinkAxis axis) const noexcept {
        if (x_owner_.empty()) return -1;
        const auto& table = axis == LinkAxis::X ? x_owner_ : y_owner_;
        return table[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(i)];
    }

    void reset() noexcept {
        for (auto& c : crossings_) c.reset();
    }

private:
    int nx_ = 0;
    int ny_ = 0;
    std::vector<Crossing> crossings_;
    std::vector<int> x_owner_;
    std::vector<int> y_owner_;
};

}  // namespace curvetlm
