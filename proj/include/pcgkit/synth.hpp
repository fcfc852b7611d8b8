#pragma once

#include "pcgkit/core.hpp"
#include "pcgkit/intervals.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pcgkit {

/// Identifier of the generator, embedded in synthetic dataset headers.
inline constexpr const char* kSynthAlgorithm = "pcgkit-synth/1 mt19937_64 box-muller";

/// mt19937_64 bits mapped to doubles by hand (not via <random> distributions,
/// whose output is implementation-defined) so streams match across toolchains.
class SynthRng {
public:
    explicit SynthRng(std::uint64_t seed);
    double uniform();                    ///< [0, 1)
    double uniform(double lo, double hi);
    double normal();                     ///< standard normal
    std::uint64_t bits();

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct SynthParams {
    int fs = 4000;
    double duration = 60.0;   ///< seconds
    double heart_rate = 72.0; ///< beats per minute
    int n_stethoscopes = 4;   ///< HM:1..n plus NM:nm_channel
    int nm_channel = 4;
    double noise_db = -30.0;      ///< HM white noise relative to heart-sound peak
    double nm_floor = 0.002;      ///< NM noise std relative to heart-sound peak
    double murmur_gain = 0.0;     ///< diastolic 150-300 Hz component, used for class separation
    std::string subject_id = "synthetic";
    Label label = Label::NOR;
};

/// Sample indices of S1 onsets the generator places for these parameters.
std::vector<std::size_t> heart_sound_onsets(const SynthParams& p, std::uint64_t seed);

/// 4 heart-mic channels with per-channel gain jitter plus one noise-floor NM channel.
Recording synth_pcg(const SynthParams& p, std::uint64_t seed);
Recording synth_pcg(int fs, double duration, double heart_rate, std::uint64_t seed);

enum class NoiseKind { Burst, Friction };

struct NoiseTarget {
    enum class Kind { AllHm, Hm, Nm } kind = Kind::Nm;
    int stethoscope = 0; ///< for Kind::Hm

    static NoiseTarget all_hm() { return {Kind::AllHm, 0}; }
    static NoiseTarget hm(int steth) { return {Kind::Hm, steth}; }
    static NoiseTarget nm() { return {Kind::Nm, 0}; }
    bool hits(const ChannelKind& ch, int nm_channel) const;
};

struct NoiseEvent {
    NoiseTarget target;
    double onset = 0.0;    ///< seconds
    double duration = 0.0; ///< seconds
    double gain = 1.0;     ///< noise RMS as a multiple of the target channel's RMS
    NoiseKind kind = NoiseKind::Burst;

    Interval support(int fs) const;
};

struct InjectedRecording {
    Recording recording;
    IntervalSet truth;
};

/**
 * Add noise events. Bursts are gated white noise with 5 ms ramps; friction
 * is 20-200 Hz band-limited noise under a slow tapered envelope. Truth is
 * the union of event supports.
 */
InjectedRecording inject_noise(const Recording& rec, std::span<const NoiseEvent> events, std::uint64_t seed,
                               int nm_channel = 4);

} // namespace pcgkit
