#include "pcgkit/synth.hpp"

#include "pcgkit/errors.hpp"
#include "pcgkit/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pcgkit {

SynthRng::SynthRng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t SynthRng::bits() { return engine_(); }

double SynthRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SynthRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SynthRng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

namespace {

constexpr double kPi = std::numbers::pi;

// Independent streams for different purposes from one user seed.
std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void add_damped_tone(std::vector<double>& x, int fs, std::size_t onset, double freq, double amp, double decay,
                     double length) {
    const auto n = static_cast<std::size_t>(length * fs);
    for (std::size_t i = 0; i < n && onset + i < x.size(); ++i) {
        const double t = static_cast<double>(i) / fs;
        const double attack = 1.0 - std::exp(-t / 0.004);
        x[onset + i] += amp * attack * std::exp(-t / decay) * std::sin(2.0 * kPi * freq * t);
    }
}

double rms(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

void validate(const SynthParams& p) {
    if (p.fs < 1000) throw ConfigError("synthetic sample rate must be >= 1000 Hz");
    if (p.duration < 10.0) throw ConfigError("synthetic duration must be >= 10 s");
    if (!(p.heart_rate > 20 && p.heart_rate < 240)) throw ConfigError("heart rate out of range");
    if (p.n_stethoscopes < 1 || p.n_stethoscopes > 7) throw ConfigError("stethoscope count must be in 1..7");
}

} // namespace

std::vector<std::size_t> heart_sound_onsets(const SynthParams& p, std::uint64_t seed) {
    validate(p);
    SynthRng rng(derive(seed, 1));
    const double period = 60.0 / p.heart_rate;
    std::vector<std::size_t> onsets;
    double t = rng.uniform(0.0, period);
    while (t < p.duration) {
        onsets.push_back(static_cast<std::size_t>(t * p.fs));
        t += period * rng.uniform(0.98, 1.02);
    }
    return onsets;
}

Recording synth_pcg(const SynthParams& p, std::uint64_t seed) {
    validate(p);
    const auto n = static_cast<std::size_t>(std::llround(p.duration * p.fs));
    const double period = 60.0 / p.heart_rate;
    const double systole = 0.3 * std::sqrt(period / 0.8);

    SynthRng shape(derive(seed, 2));
    const double s1_freq = shape.uniform(40.0, 70.0);
    const double s2_freq = shape.uniform(70.0, 120.0);

    std::vector<double> heart(n, 0.0);
    const auto onsets = heart_sound_onsets(p, seed);
    for (auto onset : onsets) {
        add_damped_tone(heart, p.fs, onset, s1_freq + shape.uniform(-5.0, 5.0), shape.uniform(0.9, 1.1), 0.02, 0.12);
        const auto s2 = onset + static_cast<std::size_t>(systole * p.fs);
        add_damped_tone(heart, p.fs, s2, s2_freq + shape.uniform(-5.0, 5.0), shape.uniform(0.5, 0.7), 0.015, 0.1);
    }

    if (p.murmur_gain > 0) {
        // Diastolic band-limited component between S2 and the next S1.
        SynthRng mr(derive(seed, 3));
        std::vector<double> noise(n);
        for (double& v : noise) v = mr.normal();
        noise = sos_filter(design_butterworth_bandpass(2, 150.0, std::min(300.0, 0.45 * p.fs), p.fs), noise);
        const double norm = rms(noise);
        for (std::size_t b = 0; b < onsets.size(); ++b) {
            const auto s = onsets[b] + static_cast<std::size_t>((systole + 0.1) * p.fs);
            const auto e = b + 1 < onsets.size() ? onsets[b + 1] : n;
            for (std::size_t i = s; i < e && i < n; ++i) heart[i] += p.murmur_gain * noise[i] / norm;
        }
    }

    double peak = 0.0;
    for (double v : heart) peak = std::max(peak, std::abs(v));
    if (peak > 0)
        for (double& v : heart) v /= peak;

    const double noise_std = std::pow(10.0, p.noise_db / 20.0);
    std::vector<Channel> channels;
    for (int s = 1; s <= p.n_stethoscopes; ++s) {
        SynthRng rng(derive(seed, 10 + static_cast<std::uint64_t>(s)));
        const double gain = rng.uniform(0.8, 1.2);
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = gain * (heart[i] + noise_std * rng.normal());
        channels.push_back({ChannelKind(MicKind::HM, s), std::move(x)});
    }
    SynthRng nm(derive(seed, 20));
    std::vector<double> floor(n);
    for (double& v : floor) v = p.nm_floor * nm.normal();
    channels.push_back({ChannelKind(MicKind::NM, p.nm_channel), std::move(floor)});
    return Recording(p.subject_id, p.label, p.fs, std::move(channels));
}

Recording synth_pcg(int fs, double duration, double heart_rate, std::uint64_t seed) {
    SynthParams p;
    p.fs = fs;
    p.duration = duration;
    p.heart_rate = heart_rate;
    return synth_pcg(p, seed);
}

bool NoiseTarget::hits(const ChannelKind& ch, int nm_channel) const {
    switch (kind) {
    case Kind::AllHm: return ch.kind == MicKind::HM;
    case Kind::Hm: return ch.kind == MicKind::HM && ch.stethoscope == stethoscope;
    case Kind::Nm: return ch.kind == MicKind::NM && ch.stethoscope == nm_channel;
    }
    return false;
}

Interval NoiseEvent::support(int fs) const {
    const auto s = static_cast<std::size_t>(std::llround(onset * fs));
    const auto e = static_cast<std::size_t>(std::llround((onset + duration) * fs));
    return {s, e - 1};
}

InjectedRecording inject_noise(const Recording& rec, std::span<const NoiseEvent> events, std::uint64_t seed,
                               int nm_channel) {
    const int fs = rec.fs();
    std::vector<Channel> channels = rec.channels();
    std::vector<double> base_rms;
    for (const auto& ch : channels) base_rms.push_back(rms(ch.samples));

    std::vector<Interval> truth;
    for (std::size_t e = 0; e < events.size(); ++e) {
        const auto& ev = events[e];
        if (!(ev.onset >= 0) || !(ev.duration > 0) || !(ev.gain > 0)) throw ConfigError("invalid noise event parameters");
        const auto sup = ev.support(fs);
        if (sup.end < sup.start || sup.end >= rec.length()) throw DataError("noise event outside the recording");
        truth.push_back(sup);
        const std::size_t len = sup.length();

        // Envelope: 5 ms ramps for bursts, cosine tapers over 10% of the event for friction.
        const std::size_t ramp = ev.kind == NoiseKind::Burst
                                     ? std::min<std::size_t>(static_cast<std::size_t>(0.005 * fs), len / 2)
                                     : len / 10;
        auto envelope = [&](std::size_t i) {
            if (ramp == 0) return 1.0;
            const std::size_t edge = std::min(i, len - 1 - i);
            if (edge >= ramp) return 1.0;
            return 0.5 - 0.5 * std::cos(kPi * static_cast<double>(edge) / static_cast<double>(ramp));
        };

        SynthRng rng(derive(seed, 1000 + e));
        for (std::size_t c = 0; c < channels.size(); ++c) {
            if (!ev.target.hits(channels[c].kind, nm_channel)) continue;
            std::vector<double> noise(len);
            for (double& v : noise) v = rng.normal();
            if (ev.kind == NoiseKind::Friction) {
                noise = sos_filter(design_butterworth_bandpass(2, 20.0, std::min(200.0, 0.45 * fs), fs), noise);
                const double r = rms(noise);
                if (r > 0)
                    for (double& v : noise) v /= r;
            }
            const double amp = ev.gain * base_rms[c];
            auto& x = channels[c].samples;
            for (std::size_t i = 0; i < len; ++i) x[sup.start + i] += amp * envelope(i) * noise[i];
        }
    }
    return {Recording(rec.subject_id(), rec.label(), fs, std::move(channels), rec.join_markers()),
            IntervalSet(rec.length(), std::move(truth))};
}

} // namespace pcgkit
