#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

namespace pcgkit {

struct PreprocessConfig {
    double band_low = 25.0;   // Hz
    double band_high = 450.0; // Hz
    int filter_order = 2;     // order of the lowpass prototype
    double spike_window = 0.5;
    double spike_ratio = 3.0;
    int spike_max_iterations = 100;
    int k_peaks = 10;
    double peak_min_separation = 0.25; // seconds

    void validate(double fs) const;
};

/// One biquad: b0 b1 b2 / 1 a1 a2.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

using SosFilter = std::vector<Biquad>;

/**
 * Digital Butterworth bandpass as second-order sections.
 *
 * Analog prototype of the given order, lowpass-to-bandpass transform and
 * bilinear transform with pre-warped band edges; the cascade has 2*order poles
 * and unit gain at the (pre-warped) geometric centre frequency.
 */
SosFilter design_butterworth_bandpass(int order, double f_low, double f_high, double fs);

/// Complex frequency response magnitude of the cascade at `freq` Hz.
double sos_magnitude(const SosFilter& sos, double freq, double fs);

/// Causal single pass (transposed direct form II), zero initial state.
std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x);

/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions.
std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x);

/// Debug dump: one `b0 b1 b2 a0 a1 a2` line per section.
void write_sos(std::ostream& out, const SosFilter& sos);

/**
 * Iterative spike removal over fixed windows.
 *
 * While the largest per-window maximum absolute amplitude exceeds
 * spike_ratio times the median, the lobe (between the bracketing zero
 * crossings) holding the largest sample of the worst window is zeroed.
 */
std::vector<double> remove_spikes(std::span<const double> x, double fs, const PreprocessConfig& cfg);

std::vector<double> bandpass(std::span<const double> x, double fs, const PreprocessConfig& cfg);

struct KPeakResult {
    std::vector<double> samples;
    double scale = 1.0;      ///< the divisor that was applied
    bool degenerate = false; ///< all-zero input, returned unchanged
};

/// Divide by the mean magnitude of the k largest local maxima of |x| that are
/// at least peak_min_separation apart (fewer if not enough exist).
KPeakResult kpeak_normalize(std::span<const double> x, double fs, const PreprocessConfig& cfg);

/// Spike removal, bandpass and k-peak normalisation, in that order.
std::vector<double> condition_channel(std::span<const double> x, double fs, const PreprocessConfig& cfg);

} // namespace pcgkit
