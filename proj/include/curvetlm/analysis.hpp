#pragma once

// Spectra, resonance extraction, shielding effectiveness.

#include "curvetlm/constants.hpp"
#include "curvetlm/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace curvetlm {

enum class Window { Rectangular, Hann };

[[nodiscard]] inline std::string to_string(Window w) { return w == Window::Hann ? "hann" : "rectangular"; }

struct Spectrum {
    std::vector<double> frequency;               ///< Hz, k * df
    std::vector<std::complex<double>> amplitude;  ///< one-sided DFT bins
    double dt = 0.0;
    long n_steps = 0;   ///< samples in the record
    long n_fft = 0;     ///< transform length (n_steps times the padding factor)
    Window window = Window::Rectangular;
    std::string source_tag;  ///< identifies the run configuration, compared by SE

    [[nodiscard]] double df() const noexcept { return 1.0 / (static_cast<double>(n_fft) * dt); }
    [[nodiscard]] std::size_t size() const noexcept { return frequency.size(); }
    [[nodiscard]] double magnitude(std::size_t k) const noexcept { return std::abs(amplitude[k]); }
};

namespace detail {

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

}  // namespace detail

/// One-sided DFT of a real record. `padding` >= 1 zero-pads the record to
/// padding * n samples, which refines the frequency grid without adding
/// information. The bins are the plain sums X_k = sum_n w_n x_n e^{-2 pi i k n / N}.
[[nodiscard]] inline Spectrum spectrum(std::span<const double> series, double dt, Window window = Window::Rectangular,
                                       int padding = 1, std::string source_tag = {}) {
    if (series.size() < 16) throw ConfigError("analysis.series", "need at least 16 samples");
    if (!(dt > 0.0)) throw ConfigError("analysis.dt", "time step must be positive");
    if (padding < 1) throw ConfigError("analysis.padding", "must be at least 1");

    const auto n = static_cast<long>(series.size());
    const long n_fft = n * padding;
    std::unique_ptr<double, detail::FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * n_fft)));
    std::unique_ptr<fftw_complex, detail::FftwFree> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n_fft / 2 + 1))));
    if (!in || !out) throw Error("fftw allocation failed");

    std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan(
        fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in.get(), out.get(), FFTW_ESTIMATE));
    if (!plan) throw Error("fftw planning failed");

    for (long k = 0; k < n_fft; ++k) {
        double w = 1.0;
        if (k >= n) {
            w = 0.0;
        } else if (window == Window::Hann) {
            w = 0.5 * (1.0 - std::cos(2.0 * constants::pi * static_cast<double>(k) / static_cast<double>(n - 1)));
        }
        in.get()[k] = k < n ? w * series[static_cast<std::size_t>(k)] : 0.0;
    }
    fftw_execute(plan.get());

    Spectrum s;
    s.dt = dt;
    s.n_steps = n;
    s.n_fft = n_fft;
    s.window = window;
    s.source_tag = std::move(source_tag);
    const long bins = n_fft / 2 + 1;
    s.frequency.resize(static_cast<std::size_t>(bins));
    s.amplitude.resize(static_cast<std::size_t>(bins));
    const double df = s.df();
    for (long k = 0; k < bins; ++k) {
        s.frequency[static_cast<std::size_t>(k)] = static_cast<double>(k) * df;
        s.amplitude[static_cast<std::size_t>(k)] = {out.get()[k][0], out.get()[k][1]};
    }
    return s;
}

/// (1/N) sum over the full two-sided DFT of |X_k|^2, rebuilt from the one-sided bins.
[[nodiscard]] inline double spectral_energy(const Spectrum& s) noexcept {
    double e = 0.0;
    const std::size_t last = s.size() - 1;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const bool unpaired = k == 0 || (s.n_fft % 2 == 0 && k == last);
        e += (unpaired ? 1.0 : 2.0) * std::norm(s.amplitude[k]);
    }
    return e / static_cast<double>(s.n_fft);
}

struct Resonance {
    double frequency = 0.0;      ///< interpolated peak frequency, Hz
    double amplitude = 0.0;      ///< interpolated peak magnitude
    double prominence_db = 0.0;  ///< height above the local median, a quality proxy
    std::string label;           ///< optional mode label
};

using ResonanceTable = std::vector<Resonance>;

enum class PeakSelection { Strongest, Lowest };

struct ResonanceOptions {
    int n_peaks = 10;
    double min_prominence_db = 6.0;
    /// Peaks more than this far below the strongest bin in band are ignored, dB.
    double min_level_db = -60.0;
    /// Half width of the running-median window, in bins.
    int median_half_width = 64;
    double f_min = 0.0;
    double f_max = std::numeric_limits<double>::infinity();
    /// Peaks closer than this are merged into the stronger one, Hz.
    double min_separation = 0.0;
    PeakSelection selection = PeakSelection::Strongest;
};

/// Strict local maxima of |X| that stand `min_prominence_db` above the local
/// median, located by a 3-point parabola through the log magnitudes. Returns
/// at most `n_peaks`, sorted by ascending frequency.
[[nodiscard]] inline ResonanceTable find_resonances(const Spectrum& s, const ResonanceOptions& opt = {}) {
    if (opt.n_peaks < 1) throw ConfigError("analysis.n_peaks", "must be at least 1");
    const std::size_t n = s.size();
    ResonanceTable found;
    if (n < 3) return found;

    std::vector<double> db(n);
    double peak_mag = 0.0;
    for (std::size_t k = 0; k < n; ++k) peak_mag = std::max(peak_mag, s.magnitude(k));
    if (peak_mag == 0.0) return found;
    const double floor_mag = peak_mag * 1e-15;
    for (std::size_t k = 0; k < n; ++k) db[k] = 20.0 * std::log10(std::max(s.magnitude(k), floor_mag));

    double band_peak_db = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
        if (s.frequency[k] >= opt.f_min && s.frequency[k] <= opt.f_max) band_peak_db = std::max(band_peak_db, db[k]);

    const double df = s.df();
    const auto hw = static_cast<std::size_t>(std::max(opt.median_half_width, 1));
    std::vector<double> window;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        const double f = s.frequency[k];
        if (f < opt.f_min || f > opt.f_max) continue;
        if (!(db[k] > db[k - 1] && db[k] > db[k + 1])) continue;
        if (db[k] < band_peak_db + opt.min_level_db) continue;

        const std::size_t lo = k > hw ? k - hw : 0;
        const std::size_t hi = std::min(n, k + hw + 1);
        window.assign(db.begin() + static_cast<long>(lo), db.begin() + static_cast<long>(hi));
        const auto mid = window.begin() + static_cast<long>(window.size() / 2);
        std::nth_element(window.begin(), mid, window.end());
        const double prominence = db[k] - *mid;
        if (prominence < opt.min_prominence_db) continue;

        const double a = db[k - 1];
        const double b = db[k];
        const double c = db[k + 1];
        const double denom = a - 2.0 * b + c;
        const double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
        const double peak_db = b - 0.25 * (a - c) * delta;
        found.push_back({f + delta * df, std::pow(10.0, peak_db / 20.0), prominence, {}});
    }

    if (opt.min_separation > 0.0) {
        std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.amplitude > y.amplitude; });
        ResonanceTable kept;
        for (const auto& r : found) {
            const bool close = std::any_of(kept.begin(), kept.end(), [&](const Resonance& q) {
                return std::abs(q.frequency - r.frequency) < opt.min_separation;
            });
            if (!close) kept.push_back(r);
        }
        found = std::move(kept);
    }

    if (opt.selection == PeakSelection::Strongest) {
        std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.amplitude > y.amplitude; });
    } else {
        std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.frequency < y.frequency; });
    }
    if (found.size() > static_cast<std::size_t>(opt.n_peaks)) found.resize(static_cast<std::size_t>(opt.n_peaks));
    std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.frequency < y.frequency; });
    return found;
}

/// |E_with| below this is treated as zero by shielding_effectiveness.
inline constexpr double division_guard = 1e-30;

struct SeCurve {
    std::vector<double> frequency;
    std::vector<double> se_db;
    std::vector<bool> clamped;  ///< true where a magnitude hit the division guard

    [[nodiscard]] std::size_t size() const noexcept { return frequency.size(); }
    [[nodiscard]] bool any_clamped() const noexcept {
        return std::find(clamped.begin(), clamped.end(), true) != clamped.end();
    }
};

/// SE(f) = 20 log10(|E_without| / |E_with|). Both spectra must share the
/// frequency axis and, when tagged, the source configuration.
[[nodiscard]] inline SeCurve shielding_effectiveness(const Spectrum& without, const Spectrum& with) {
    if (without.size() != with.size() || without.n_fft != with.n_fft ||
        std::abs(without.dt - with.dt) > 1e-12 * without.dt || without.window != with.window) {
        throw ConfigError("analysis.se", "spectra have different frequency axes or windows");
    }
    if (!without.source_tag.empty() && !with.source_tag.empty() && without.source_tag != with.source_tag) {
        throw ConfigError("analysis.se", "spectra come from different source configurations");
    }
    SeCurve se;
    se.frequency = without.frequency;
    se.se_db.resize(without.size());
    se.clamped.resize(without.size());
    for (std::size_t k = 0; k < without.size(); ++k) {
        double num = without.magnitude(k);
        double den = with.magnitude(k);
        bool clamp = false;
        if (den < division_guard) {
            den = division_guard;
            clamp = true;
        }
        if (num < division_guard) {
            num = division_guard;
            clamp = true;
        }
        se.se_db[k] = 20.0 * std::log10(num / den);
        se.clamped[k] = clamp;
    }
    return se;
}

/// SE value at the bin nearest f.
[[nodiscard]] inline double se_at(const SeCurve& se, double f) {
    if (se.size() == 0) throw ConfigError("analysis.se", "empty curve");
    const auto it = std::lower_bound(se.frequency.begin(), se.frequency.end(), f);
    std::size_t k = static_cast<std::size_t>(it - se.frequency.begin());
    if (k >= se.size()) k = se.size() - 1;
    if (k > 0 && std::abs(se.frequency[k - 1] - f) < std::abs(se.frequency[k] - f)) --k;
    return se.se_db[k];
}

/// Arithmetic mean of the SE in dB over the bins inside [f_lo, f_hi].
[[nodiscard]] inline double band_mean(const SeCurve& se, double f_lo, double f_hi) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < se.size(); ++k) {
        if (se.frequency[k] >= f_lo && se.frequency[k] <= f_hi) {
            sum += se.se_db[k];
            ++n;
        }
    }
    if (n == 0) throw ConfigError("analysis.band", "no spectral bins inside the band");
    return sum / static_cast<double>(n);
}

/// Frequencies of strict local minima of an SE curve within [f_lo, f_hi].
[[nodiscard]] inline std::vector<double> se_dips(const SeCurve& se, double f_lo, double f_hi) {
    std::vector<double> dips;
    for (std::size_t k = 1; k + 1 < se.size(); ++k) {
        if (se.frequency[k] < f_lo || se.frequency[k] > f_hi) continue;
        if (se.se_db[k] < se.se_db[k - 1] && se.se_db[k] < se.se_db[k + 1]) dips.push_back(se.frequency[k]);
    }
    return dips;
}

/// 100 |f_a - f_b| / f_b, in percent, with f_b the reference.
[[nodiscard]] inline double relative_difference(double f_a, double f_b) {
    if (f_b == 0.0) throw ConfigError("analysis.reference", "reference frequency must be non-zero");
    return 100.0 * std::abs(f_a - f_b) / std::abs(f_b);
}

/// Resonance nearest to f, or nullptr.
[[nodiscard]] inline const Resonance* nearest(const ResonanceTable& table, double f) noexcept {
    const Resonance* best = nullptr;
    for (const auto& r : table)
        if (!best || std::abs(r.frequency - f) < std::abs(best->frequency - f)) best = &r;
    return best;
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& s) {
    os.precision(12);
    os << "f_Hz,re,im,mag_dB\n";
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double mag = s.magnitude(k);
        os << s.frequency[k] << ',' << s.amplitude[k].real() << ',' << s.amplitude[k].imag() << ','
           << (mag > 0.0 ? 20.0 * std::log10(mag) : -std::numeric_limits<double>::infinity()) << '\n';
    }
}

inline void write_se_csv(std::ostream& os, const SeCurve& se, double f_lo = 0.0,
                         double f_hi = std::numeric_limits<double>::infinity()) {
    os.precision(12);
    os << "f_Hz,SE_dB\n";
    for (std::size_t k = 0; k < se.size(); ++k) {
        if (se.frequency[k] < f_lo || se.frequency[k] > f_hi) continue;
        os << se.frequency[k] << ',' << se.se_db[k] << '\n';
    }
}

inline void write_resonances_csv(std::ostream& os, const ResonanceTable& table) {
    os.precision(12);
    os << "f_Hz,mag\n";
    for (const auto& r : table) os << r.frequency << ',' << r.amplitude << '\n';
}

}  // namespace curvetlm
