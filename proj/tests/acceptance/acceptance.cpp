// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [--only 1,3,8] [--scenarios DIR]

#include "curvetlm/scenario.hpp"

#include <CLI11.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>

using namespace curvetlm;
using json = nlohmann::json;

namespace {

using clock_type = std::chrono::steady_clock;

fs::path scenario_dir = CURVETLM_SCENARIO_DIR;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

json raw_config(const std::string& name) {
    std::ifstream in(scenario_dir / name);
    if (!in) throw ConfigError("scenario", "cannot open " + (scenario_dir / name).string());
    return json::parse(in);
}

ScenarioResult run_named(const json& j) {
    const auto t0 = clock_type::now();
    auto r = run_scenario(parse_config(j));
    std::printf("    [%s, dl=%.4g m, %ld steps, %zu crossings: %.1f s]\n", r.name.c_str(), r.dl, r.steps,
                r.crossing_count, seconds_since(t0));
    return r;
}

double max_singular(const CMatrix& s) { return Eigen::JacobiSVD<CMatrix>(s).singularValues()(0); }

FilmMaterial cfc_film() { return FilmMaterial{2.0, 1.0, 1e4, 0.0, 1e-3}; }

LinkLine line_for(NodeKind kind, double dl) {
    const MeshGrid m(2, 2, dl, kind);
    return {m.link_admittance(), m.link_speed()};
}

struct Mode {
    std::string label;
    double metal_ghz;   ///< reference metal frequency
    double cfc_ghz;     ///< reference CFC frequency
    bool te;            ///< found in the series-node run
};

const std::vector<Mode> ellipse_modes{
    {"even TE11", 0.889, 0.883, true},  {"odd TE11", 1.30, 1.291, true},    {"even TM01", 1.467, 1.465, false},
    {"even TM11", 2.124, 2.091, false}, {"even TE01", 2.50, 2.487, true},   {"odd TM11", 2.554, 2.549, false},
};

/// Resonance nearest each reference mode, from the matching polarisation run.
std::vector<double> match_modes(const ScenarioResult& te, const ScenarioResult& tm) {
    std::vector<double> out;
    for (const auto& m : ellipse_modes) {
        const auto& table = (m.te ? te : tm).probes.front().resonances;
        const auto* r = nearest(table, m.metal_ghz * 1e9);
        out.push_back(r ? r->frequency : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

// Ellipse runs are shared by criteria 3 and 4.
std::map<std::string, ScenarioResult> ellipse_cache;
const ScenarioResult& ellipse(const std::string& name) {
    auto it = ellipse_cache.find(name);
    if (it == ellipse_cache.end()) it = ellipse_cache.emplace(name, run_named(raw_config(name + ".json"))).first;
    return it->second;
}

// The 4 mm airfoil pair is shared by criteria 5 and 6.
std::optional<ScenarioResult> airfoil_cache;
const ScenarioResult& airfoil_4mm() {
    if (!airfoil_cache) airfoil_cache = run_named(raw_config("airfoil_se.json"));
    return *airfoil_cache;
}

/// Strongest P1 resonance in [1.0, 1.2] GHz: the first airfoil mode.
double airfoil_f1(const ScenarioResult& r) {
    auto opt = parse_config(raw_config("airfoil_se.json")).analysis.resonances;
    opt.f_min = 1.0e9;
    opt.f_max = 1.2e9;
    opt.n_peaks = 1;
    opt.selection = PeakSelection::Strongest;
    const auto table = find_resonances(r.probe("P1").spectrum, opt);
    return table.empty() ? std::numeric_limits<double>::quiet_NaN() : table.front().frequency;
}

// ---------------------------------------------------------------------------

bool criterion_1() {
    const auto t0 = clock_type::now();
    const double dl = 0.002;
    const double dt = time_step(dl);
    const StackGeometry g{0.3 * dl, 0.7 * dl};
    double worst = 0.0;
    for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
        const auto line = line_for(kind, dl);
        const auto bank = synthesize_filters(g, cfc_film(), default_truncation, dt, line);
        const int samples = 2000;
        for (int k = 1; k < samples; ++k) {
            const double x = 0.01 + (2.5 - 0.01) * k / samples;
            const double wp = 2.0 / dt * std::tan(x / 2.0);
            const CMatrix analog = stack_admittance(g, cfc_film(), wp, line, default_truncation);
            const CMatrix digital = bank.response(std::polar(1.0, x));
            worst = std::max(worst, (digital - analog).norm() / analog.norm());
        }
    }
    const double secs = seconds_since(t0);
    std::printf("    worst relative mismatch %.3e over 0.01 < w dt < 2.5 (both node kinds), %.3f s\n", worst, secs);
    return worst < 1e-9 && secs < 1.0;
}

bool criterion_2() {
    const auto t0 = clock_type::now();
    const auto r = run_named(raw_config("cavity_tm.json"));
    const double secs = seconds_since(t0);
    std::vector<double> analytic;
    for (int m = 1; m <= 8; ++m)
        for (int n = 1; n <= 4; ++n) analytic.push_back(0.5 * constants::c0 * std::hypot(m / 0.2, n / 0.1));
    std::sort(analytic.begin(), analytic.end());
    const auto& table = r.probes.front().resonances;
    bool ok = table.size() >= 5 && secs < 60.0;
    for (std::size_t k = 0; k < 5 && k < table.size(); ++k) {
        const double e = relative_difference(table[k].frequency, analytic[k]);
        std::printf("    mode %zu: %.5f GHz vs %.5f GHz (%.3f %%)\n", k + 1, table[k].frequency / 1e9, analytic[k] / 1e9, e);
        ok = ok && e < 1.0;
    }
    std::printf("    runtime %.1f s (limit 60 s)\n", secs);
    return ok;
}

bool criterion_3() {
    const auto f = match_modes(ellipse("ellipse_metal_te"), ellipse("ellipse_metal_tm"));
    bool ok = true;
    for (std::size_t k = 0; k < ellipse_modes.size(); ++k) {
        const double e = relative_difference(f[k], ellipse_modes[k].metal_ghz * 1e9);
        std::printf("    %-10s %.4f GHz vs %.3f GHz (%.2f %%)\n", ellipse_modes[k].label.c_str(), f[k] / 1e9,
                    ellipse_modes[k].metal_ghz, e);
        ok = ok && e < 2.0;
    }
    return ok;
}

bool criterion_4() {
    const auto metal = match_modes(ellipse("ellipse_metal_te"), ellipse("ellipse_metal_tm"));
    const auto cfc = match_modes(ellipse("ellipse_cfc_te"), ellipse("ellipse_cfc_tm"));
    bool ok = true;
    std::size_t largest = 0;
    std::vector<double> diff;
    for (std::size_t k = 0; k < ellipse_modes.size(); ++k) {
        diff.push_back(relative_difference(cfc[k], metal[k]));
        const double ref = relative_difference(ellipse_modes[k].cfc_ghz, ellipse_modes[k].metal_ghz);
        std::printf("    %-10s metal %.4f  cfc %.4f GHz  diff %.3f %%  (reference tables: %.2f %%)\n",
                    ellipse_modes[k].label.c_str(), metal[k] / 1e9, cfc[k] / 1e9, diff[k], ref);
        ok = ok && diff[k] < 2.5;
        if (diff[k] > diff[largest]) largest = k;
    }
    std::printf("    largest difference: %s (required: even TM11)\n", ellipse_modes[largest].label.c_str());
    // Information only: the CFC runs against the reference metal column.
    std::size_t largest_ref = 0;
    double worst_ref = 0.0;
    for (std::size_t k = 0; k < ellipse_modes.size(); ++k) {
        const double d = relative_difference(cfc[k], ellipse_modes[k].metal_ghz * 1e9);
        if (d > worst_ref) {
            worst_ref = d;
            largest_ref = k;
        }
    }
    std::printf("    info: against the reference metal values the largest difference is %s (%.2f %%)\n",
                ellipse_modes[largest_ref].label.c_str(), worst_ref);
    return ok && ellipse_modes[largest].label == "even TM11";
}

bool criterion_5() {
    const double target = 1.063e9;
    std::vector<std::pair<double, double>> rows;  // dl, f1
    json j = raw_config("airfoil_se.json");
    j["analysis"]["shielding"] = false;
    for (double dl : {0.006, 0.005}) {
        json k = j;
        k["mesh"]["dl"] = dl;
        rows.emplace_back(dl, airfoil_f1(run_named(k)));
    }
    rows.emplace_back(0.004, airfoil_f1(airfoil_4mm()));
    bool monotone = true;
    double previous = std::numeric_limits<double>::infinity();
    for (const auto& [dl, f] : rows) {
        const double e = relative_difference(f, target);
        std::printf("    dl=%.0f mm  t/dl=%.1f  f1=%.5f GHz  error %.3f %%\n", dl * 1e3, 0.15 / dl, f / 1e9, e);
        monotone = monotone && e <= previous;
        previous = e;
    }
    const double final_error = relative_difference(rows.back().second, target);
    std::printf("    error at 4 mm %.3f %% (limit 3 %%), monotone trend: %s\n", final_error, monotone ? "yes" : "no");
    return final_error < 3.0 && monotone;
}

bool criterion_6() {
    const auto& r = airfoil_4mm();
    const double lo = 1.0e9;
    const double hi = 1.2e9;
    std::map<std::string, double> mean;
    for (const char* p : {"P1", "P2", "P3", "P4"}) {
        mean[p] = band_mean(*r.probe(p).se, lo, hi);
        std::printf("    mean SE %s over 1.0-1.2 GHz: %.1f dB\n", p, mean[p]);
    }
    const bool ordering = mean["P4"] > mean["P1"] && mean["P3"] > mean["P1"];
    std::printf("    SE(P4) > SE(P1): %s, SE(P3) > SE(P1): %s\n", mean["P4"] > mean["P1"] ? "yes" : "no",
                mean["P3"] > mean["P1"] ? "yes" : "no");
    // Bin-by-bin share of the ordering, for information.
    const auto& se1 = *r.probe("P1").se;
    const auto& se3 = *r.probe("P3").se;
    const auto& se4 = *r.probe("P4").se;
    int bins = 0, p4 = 0, p3 = 0;
    for (std::size_t k = 0; k < se1.size(); ++k) {
        if (se1.frequency[k] < lo || se1.frequency[k] > hi) continue;
        ++bins;
        p4 += se4.se_db[k] > se1.se_db[k];
        p3 += se3.se_db[k] > se1.se_db[k];
    }
    std::printf("    info: bins with SE(P4) > SE(P1) %d/%d, SE(P3) > SE(P1) %d/%d\n", p4, bins, p3, bins);

    bool aligned = true;
    for (const auto& p : r.probes) {
        const double df = p.spectrum.df();
        const auto dips = se_dips(*p.se, 0.9e9, 2.1e9);
        for (const auto& res : p.resonances) {
            double best = std::numeric_limits<double>::infinity();
            for (double d : dips)
                if (std::abs(d - res.frequency) < std::abs(best - res.frequency)) best = d;
            const bool hit = std::abs(best - res.frequency) <= 2.0 * df;
            // Depth of the dip below the SE median within +-25 MHz, for information.
            std::vector<double> around;
            for (std::size_t k = 0; k < p.se->size(); ++k)
                if (std::abs(p.se->frequency[k] - best) <= 25e6) around.push_back(p.se->se_db[k]);
            std::nth_element(around.begin(), around.begin() + static_cast<long>(around.size() / 2), around.end());
            const double depth = around[around.size() / 2] - se_at(*p.se, best);
            std::printf("    %s resonance %.4f GHz -> SE dip %.4f GHz (%.2f bins, %.1f dB below local median)%s\n",
                        p.config.name.c_str(), res.frequency / 1e9, best / 1e9, std::abs(best - res.frequency) / df,
                        depth, hit ? "" : "  MISALIGNED");
            aligned = aligned && hit;
        }
    }
    return ordering && aligned;
}

bool criterion_7() {
    // Same 2 mm mesh and excitation for all runs, so one panel-free run serves every case.
    json base = raw_config("airfoil_gap_2mm.json");
    base["geometry"].erase("gaps");
    base["name"] = "airfoil_no_gap";
    const auto sealed = run_named(base);
    const Spectrum& bare = *sealed.probe("P4").spectrum_without;
    const double f1 = airfoil_f1(sealed);

    auto gap_se = [&](const std::string& file) {
        json j = raw_config(file);
        j["analysis"]["shielding"] = false;
        const auto r = run_named(j);
        std::printf("    %s removed %zu crossings\n", r.name.c_str(), r.gap_removed.size());
        return shielding_effectiveness(bare, r.probe("P4").spectrum);
    };
    const SeCurve none = *sealed.probe("P4").se;
    const SeCurve gap2 = gap_se("airfoil_gap_2mm.json");
    const SeCurve gap6 = gap_se("airfoil_gap_6mm.json");

    const double lo = 0.98 * f1;
    const double hi = 1.02 * f1;
    const double s0 = band_mean(none, lo, hi);
    const double s2 = band_mean(gap2, lo, hi);
    const double s6 = band_mean(gap6, lo, hi);
    std::printf("    f1 = %.4f GHz; P4 SE over f1 +- 2 %%: no gap %.1f dB, 2 mm %.1f dB, 6 mm %.1f dB\n", f1 / 1e9, s0,
                s2, s6);
    std::printf("    info: P4 SE at f1: no gap %.1f dB, 2 mm %.1f dB, 6 mm %.1f dB\n", se_at(none, f1), se_at(gap2, f1),
                se_at(gap6, f1));
    std::printf("    reduction: 2 mm %.1f dB (limit 30 dB), 6 mm %.1f dB\n", s0 - s2, s0 - s6);
    return s0 - s2 >= 30.0 && s0 - s6 > s0 - s2;
}

bool criterion_8() {
    bool ok = true;

    // Energy in a closed PEC box.
    double drift = 0.0;
    for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
        MeshGrid m(100, 50, 0.002, kind, Boundaries::uniform(BoundaryKind::PEC));
        CrossingSet none;
        inject(DeltaPoint{13, 7, 1.0, Impulse{}}, m, 0);
        scatter(m);
        connect(m, none);
        const double e0 = m.incident_energy();
        for (int k = 0; k < 10000; ++k) {
            scatter(m);
            connect(m, none);
        }
        drift = std::max(drift, std::abs(m.incident_energy() - e0) / e0);
    }
    std::printf("    energy drift over 1e4 steps: %.2e (limit 1e-10)\n", drift);
    ok = ok && drift < 1e-10;

    // Passivity of every bank the shipped layouts synthesise.
    double worst_gain = 0.0;
    std::size_t banks = 0;
    for (const char* file : {"ellipse_cfc_te.json", "ellipse_cfc_tm.json", "airfoil_se.json"}) {
        const auto c = parse_config(raw_config(file));
        const MeshGrid mesh(c.mesh.nx(), c.mesh.ny(), c.mesh.dl, c.mesh.kind, c.mesh.boundaries);
        const auto layout = compute_crossings(c.geometry->curve, c.mesh.descriptor());
        const auto set = make_crossing_set(mesh, layout.seeds, {c.geometry->material}, c.panel.terms);
        for (const auto& x : set.crossings()) {
            for (const auto* bank : {&x.film_bank(), &x.lower_stub(), &x.upper_stub()}) {
                if (!bank->has_value()) continue;
                ++banks;
                for (double w = 0.005; w < 3.14; w += 0.0314) {
                    const CMatrix s = terminal_scattering((*bank)->response(std::polar(1.0, w)), (*bank)->terminals(),
                                                          mesh.link_admittance());
                    worst_gain = std::max(worst_gain, max_singular(s));
                }
            }
        }
    }
    std::printf("    passivity: %zu banks, largest scattering gain %.12f (limit 1 + 1e-9)\n", banks, worst_gain);
    ok = ok && worst_gain <= 1.0 + 1e-9;

    // Vacuum film: a pulse passes unchanged after one link delay.
    const double dl = 0.002;
    const double dt = time_step(dl);
    {
        auto bank = synthesize_filters({0.3 * dl, 0.7 * dl}, FilmMaterial::vacuum(1e-6 * dl), default_truncation, dt,
                                       line_for(NodeKind::Shunt, dl));
        double e = 0.0, r = 0.0, prev = 0.0;
        for (int k = 0; k < 400; ++k) {
            const double in = std::exp(-std::pow((k - 60) / 10.0, 2));
            const double out = bank.step(in, 0.0).second;
            e += (out - prev) * (out - prev);
            r += prev * prev;
            prev = in;
        }
        const double err = std::sqrt(e / r);
        std::printf("    air-film identity: pulse error %.3f %% at N=%d (limit 1 %%)\n", 100 * err, default_truncation);
        ok = ok && err < 0.01;
    }

    // High-conductivity film reflects like a perfect conductor.
    {
        double worst = 0.0;
        const FilmMaterial metal{2.0, 1.0, 1e8, 0.0, 1e-3};
        for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
            const auto line = line_for(kind, dl);
            const auto bank = synthesize_filters(embedded_geometry(0.5, dl), metal, default_truncation, dt, line);
            for (double f : {0.5e9, 1e9, 2e9}) {
                const CMatrix s = terminal_scattering(bank.response_at(2 * constants::pi * f), bank.terminals(),
                                                      line.admittance);
                worst = std::max(worst, std::abs(s(0, 0) + 1.0));
            }
        }
        std::printf("    PEC limit: |reflection + 1| = %.2e at sigma = 1e8 S/m (limit 0.01)\n", worst);
        ok = ok && worst < 0.01;
    }

    // Doubling the Foster truncation barely moves the band response.
    {
        double worst = 0.0;
        for (NodeKind kind : {NodeKind::Series, NodeKind::Shunt}) {
            const auto line = line_for(kind, dl);
            for (double a : {0.05, 0.3, 0.5, 0.8}) {
                const auto g = embedded_geometry(a, dl);
                const auto coarse = synthesize_filters(g, cfc_film(), default_truncation, dt, line);
                const auto fine = synthesize_filters(g, cfc_film(), 2 * default_truncation, dt, line);
                for (double f = 1e8; f <= 3e9; f += 5e7) {
                    const double w = 2 * constants::pi * f;
                    const CMatrix sc = terminal_scattering(coarse.response_at(w), coarse.terminals(), line.admittance);
                    const CMatrix sf = terminal_scattering(fine.response_at(w), fine.terminals(), line.admittance);
                    worst = std::max(worst, (sc - sf).norm() / sf.norm());
                }
            }
        }
        std::printf("    truncation: N=%d -> %d changes S by %.3f %% at most over 0.1-3 GHz (limit 0.1 %%)\n",
                    default_truncation, 2 * default_truncation, 100 * worst);
        ok = ok && worst < 1e-3;
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria for the TLM thin-panel solver"};
    std::vector<int> only;
    std::string dir = scenario_dir.string();
    app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
    app.add_option("--scenarios", dir, "Directory holding the scenario files");
    CLI11_PARSE(app, argc, argv);
    scenario_dir = dir;

    const std::vector<std::pair<std::string, std::function<bool()>>> criteria{
        {"filter synthesis matches the pre-warped stack admittance", criterion_1},
        {"rectangular cavity modes within 1 %", criterion_2},
        {"metal ellipse modes within 2 %", criterion_3},
        {"CFC ellipse within 2.5 % of metal, even TM11 largest", criterion_4},
        {"airfoil f1 within 3 % and converging", criterion_5},
        {"airfoil SE ordering and dips at resonances", criterion_6},
        {"lower-surface gap reduces SE at P4 by >= 30 dB, 6 mm more than 2 mm", criterion_7},
        {"property suite", criterion_8},
    };
    const std::set<int> wanted(only.begin(), only.end());
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        std::printf("criterion %d: %s\n", id, criteria[k].first.c_str());
        std::fflush(stdout);
        bool pass = false;
        const auto t0 = clock_type::now();
        try {
            pass = criteria[k].second();
        } catch (const std::exception& e) {
            std::printf("    error: %s\n", e.what());
        }
        std::printf("%s criterion %d (%.1f s)\n", pass ? "PASS" : "FAIL", id, seconds_since(t0));
        std::fflush(stdout);
        failed += pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
