#pragma once

#include "pcgkit/core.hpp"
#include "pcgkit/intervals.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace pcgkit {

/// Energy-median gate parameters. Durations are in seconds.
struct GateConfig {
    double frame_len_hm = 2.5;  ///< long frames catch friction noise on heart mics
    double frame_len_nm = 0.25; ///< short frames catch door slams / speech on the noise mic
    double threshold = 2.5;     ///< multiple of the median frame energy
    int nm_channel = 4;         ///< stethoscope whose noise mic drives NM detection
    double boundary_flag = 1.0; ///< flagged at each end and around every join

    void validate() const;
};

/// Samples per frame for a frame duration at `fs`, rounded to nearest.
std::size_t frame_samples(double fs, double frame_seconds);

/// Sum of squares per full frame of F samples; a trailing partial frame is ignored.
std::vector<double> frame_energies(std::span<const double> x, std::size_t frame_len);

/// Median with the even-count convention (mean of the two middle values).
double median(std::vector<double> values);

/**
 * Flag frames whose energy exceeds `threshold` times the median energy.
 *
 * Frames are 0-indexed, frame i covering [iF, (i+1)F - 1]. The median is taken
 * over every frame except the first and last; those two are still eligible to
 * be flagged. Needs at least three full frames (DegenerateInputError).
 */
IntervalSet flag_noisy_frames(std::span<const double> x, std::size_t frame_len, double threshold);
IntervalSet flag_noisy_frames(std::span<const double> x, double fs, double frame_seconds, double threshold);

/// Start/end seconds of the recording plus +-boundary_flag around each join marker.
IntervalSet flag_boundaries(const Recording& rec, const GateConfig& cfg);

struct ChannelFlags {
    ChannelKind channel;
    IntervalSet noisy;
};

struct GateResult {
    std::vector<ChannelFlags> per_channel; ///< HM channels in recording order, then the NM channel
    IntervalSet boundaries;
    IntervalSet noisy; ///< union of everything above
    IntervalSet clean; ///< complement of `noisy`

    double rejected_fraction() const;
};

/// Runs the gate on every HM channel and on the configured NM channel.
GateResult gate_recording(const Recording& rec, const GateConfig& cfg);

/// Clean sample ranges shared by all channels of the recording.
IntervalSet detect_clean_intervals(const Recording& rec, const GateConfig& cfg);

} // namespace pcgkit
