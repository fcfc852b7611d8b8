#include "pcgkit/preprocess.hpp"

#include "pcgkit/errors.hpp"
#include "pcgkit/noise_gate.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>

namespace pcgkit {

using cplx = std::complex<double>;

void PreprocessConfig::validate(double fs) const {
    if (!(band_low > 0) || !(band_low < band_high)) throw ConfigError("bandpass edges must satisfy 0 < low < high");
    if (!(band_high < fs / 2)) throw ConfigError("bandpass upper edge must be below fs/2");
    if (filter_order < 1) throw ConfigError("filter order must be >= 1");
    if (!(spike_window > 0) || !(spike_ratio > 0) || spike_max_iterations < 0)
        throw ConfigError("bad spike removal parameters");
    if (k_peaks < 1) throw ConfigError("k_peaks must be >= 1");
    if (!(peak_min_separation >= 0)) throw ConfigError("peak separation must be non-negative");
}

SosFilter design_butterworth_bandpass(int order, double f_low, double f_high, double fs) {
    if (order < 1) throw ConfigError("filter order must be >= 1");
    if (!(f_low > 0) || !(f_low < f_high) || !(f_high < fs / 2))
        throw ConfigError("bandpass edges must satisfy 0 < low < high < fs/2");
    constexpr double pi = std::numbers::pi;
    const double k2 = 2.0 * fs;
    const double w1 = k2 * std::tan(pi * f_low / fs);
    const double w2 = k2 * std::tan(pi * f_high / fs);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    std::vector<cplx> poles;
    for (int k = 0; k < order; ++k) {
        const cplx p = std::polar(1.0, pi * (2.0 * k + order + 1) / (2.0 * order));
        const cplx half = p * bw / 2.0;
        const cplx root = std::sqrt(half * half - w0 * w0);
        for (const cplx s : {half + root, half - root}) poles.push_back((k2 + s) / (k2 - s));
    }

    // Conjugate pairs first, then the real poles two at a time.
    constexpr double tol = 1e-12;
    std::vector<double> real_poles;
    SosFilter sos;
    for (const auto& p : poles) {
        if (std::abs(p.imag()) <= tol * std::abs(p)) {
            real_poles.push_back(p.real());
        } else if (p.imag() > 0) {
            Biquad q;
            q.b = {1.0, 0.0, -1.0};
            q.a = {1.0, -2.0 * p.real(), std::norm(p)};
            sos.push_back(q);
        }
    }
    std::ranges::sort(real_poles);
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        Biquad q;
        q.b = {1.0, 0.0, -1.0};
        q.a = {1.0, -(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]};
        sos.push_back(q);
    }
    if (sos.size() != static_cast<std::size_t>(order))
        throw InvariantError("butterworth design produced an unexpected number of sections");

    const double f_centre = std::atan(w0 / k2) * fs / pi;
    const double g = 1.0 / sos_magnitude(sos, f_centre, fs);
    for (auto& v : sos.front().b) v *= g;
    return sos;
}

double sos_magnitude(const SosFilter& sos, double freq, double fs) {
    const cplx z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq / fs);
    const cplx z2 = z1 * z1;
    cplx h = 1.0;
    for (const auto& q : sos) h *= (q.b[0] + q.b[1] * z1 + q.b[2] * z2) / (q.a[0] + q.a[1] * z1 + q.a[2] * z2);
    return std::abs(h);
}

namespace {

struct SectionState {
    double z1 = 0.0;
    double z2 = 0.0;
};

void run_sections(const SosFilter& sos, std::vector<SectionState> state, std::vector<double>& x) {
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const auto& q = sos[s];
        auto [z1, z2] = state[s];
        for (double& v : x) {
            const double in = v;
            const double out = q.b[0] * in + z1;
            z1 = q.b[1] * in - q.a[1] * out + z2;
            z2 = q.b[2] * in - q.a[2] * out;
            v = out;
        }
    }
}

// Steady-state section states for a unit step, cascaded as the step response
// propagates through each section's DC gain.
std::vector<SectionState> step_states(const SosFilter& sos) {
    std::vector<SectionState> zi;
    double scale = 1.0;
    for (const auto& q : sos) {
        const double dc = (q.b[0] + q.b[1] + q.b[2]) / (q.a[0] + q.a[1] + q.a[2]);
        const double z2 = q.b[2] - q.a[2] * dc;
        const double z1 = q.b[1] - q.a[1] * dc + z2;
        zi.push_back({z1 * scale, z2 * scale});
        scale *= dc;
    }
    return zi;
}

std::vector<SectionState> scaled(std::vector<SectionState> zi, double k) {
    for (auto& s : zi) {
        s.z1 *= k;
        s.z2 *= k;
    }
    return zi;
}

} // namespace

std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    run_sections(sos, std::vector<SectionState>(sos.size()), y);
    return y;
}

std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    std::size_t pad = 3 * (2 * sos.size() + 1);
    pad = std::min(pad, n - 1);

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    const auto zi = step_states(sos);
    run_sections(sos, scaled(zi, ext.front()), ext);
    std::ranges::reverse(ext);
    run_sections(sos, scaled(zi, ext.front()), ext);
    std::ranges::reverse(ext);
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

void write_sos(std::ostream& out, const SosFilter& sos) {
    const auto old = out.precision(17);
    for (const auto& q : sos)
        out << q.b[0] << ' ' << q.b[1] << ' ' << q.b[2] << ' ' << q.a[0] << ' ' << q.a[1] << ' ' << q.a[2] << '\n';
    out.precision(old);
}

// ---------------------------------------------------------------------------

std::vector<double> remove_spikes(std::span<const double> x, double fs, const PreprocessConfig& cfg) {
    std::vector<double> y(x.begin(), x.end());
    if (y.empty()) return y;
    const std::size_t win = std::min(frame_samples(fs, cfg.spike_window), y.size());
    const std::size_t n_frames = (y.size() + win - 1) / win;

    auto frame_maa = [&](std::size_t f) {
        const std::size_t s = f * win;
        const std::size_t e = std::min(s + win, y.size());
        double m = 0.0;
        for (std::size_t i = s; i < e; ++i) m = std::max(m, std::abs(y[i]));
        return m;
    };
    std::vector<double> maa(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) maa[f] = frame_maa(f);

    for (int iter = 0; iter < cfg.spike_max_iterations; ++iter) {
        const auto worst = static_cast<std::size_t>(std::ranges::max_element(maa) - maa.begin());
        if (!(maa[worst] > cfg.spike_ratio * median(maa))) break;

        const std::size_t s = worst * win;
        const std::size_t e = std::min(s + win, y.size()); // exclusive
        std::size_t peak = s;
        for (std::size_t i = s; i < e; ++i)
            if (std::abs(y[i]) > std::abs(y[peak])) peak = i;

        // A crossing at i means y[i] and y[i+1] have strictly opposite signs.
        std::size_t lo = s;
        for (std::size_t i = peak; i > s; --i)
            if (y[i - 1] * y[i] < 0) {
                lo = i;
                break;
            }
        std::size_t hi = e - 1;
        for (std::size_t i = peak; i + 1 < e; ++i)
            if (y[i] * y[i + 1] < 0) {
                hi = i;
                break;
            }
        std::fill(y.begin() + static_cast<std::ptrdiff_t>(lo), y.begin() + static_cast<std::ptrdiff_t>(hi + 1), 0.0);
        maa[worst] = frame_maa(worst);
    }
    return y;
}

std::vector<double> bandpass(std::span<const double> x, double fs, const PreprocessConfig& cfg) {
    cfg.validate(fs);
    return sos_filtfilt(design_butterworth_bandpass(cfg.filter_order, cfg.band_low, cfg.band_high, fs), x);
}

KPeakResult kpeak_normalize(std::span<const double> x, double fs, const PreprocessConfig& cfg) {
    KPeakResult out;
    out.samples.assign(x.begin(), x.end());
    const std::size_t n = x.size();

    // Local maxima of |x|; a plateau contributes its first sample.
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::abs(x[i]);
        if (v == 0.0) continue;
        const bool left_ok = i == 0 || v > std::abs(x[i - 1]);
        const bool right_ok = i + 1 == n || v >= std::abs(x[i + 1]);
        if (left_ok && right_ok) candidates.push_back(i);
    }
    if (candidates.empty()) {
        out.degenerate = true;
        return out;
    }
    std::ranges::stable_sort(candidates, [&](std::size_t a, std::size_t b) { return std::abs(x[a]) > std::abs(x[b]); });

    const auto min_sep = static_cast<std::size_t>(std::llround(cfg.peak_min_separation * fs));
    std::vector<std::size_t> chosen;
    for (auto c : candidates) {
        if (chosen.size() == static_cast<std::size_t>(cfg.k_peaks)) break;
        const bool far = std::ranges::all_of(chosen, [&](std::size_t p) { return (c > p ? c - p : p - c) >= min_sep; });
        if (far) chosen.push_back(c);
    }
    double sum = 0.0;
    for (auto c : chosen) sum += std::abs(x[c]);
    out.scale = sum / static_cast<double>(chosen.size());
    for (double& v : out.samples) v /= out.scale;
    return out;
}

std::vector<double> condition_channel(std::span<const double> x, double fs, const PreprocessConfig& cfg) {
    cfg.validate(fs);
    auto despiked = remove_spikes(x, fs, cfg);
    auto filtered = bandpass(despiked, fs, cfg);
    return kpeak_normalize(filtered, fs, cfg).samples;
}

} // namespace pcgkit
