#include "pcgkit/noise_gate.hpp"

#include "pcgkit/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pcgkit {

void GateConfig::validate() const {
    if (!(frame_len_hm > 0) || !(frame_len_nm > 0) || !(boundary_flag >= 0))
        throw ConfigError("gate durations must be positive");
    if (!(threshold > 0)) throw ConfigError("gate threshold must be positive");
    if (nm_channel < 1 || nm_channel > 7) throw ConfigError("gate nm_channel must be in 1..7");
}

std::size_t frame_samples(double fs, double frame_seconds) {
    if (!(fs > 0) || !(frame_seconds > 0)) throw ConfigError("frame length and sample rate must be positive");
    const auto f = std::llround(fs * frame_seconds);
    if (f < 1) throw ConfigError("frame shorter than one sample");
    return static_cast<std::size_t>(f);
}

std::vector<double> frame_energies(std::span<const double> x, std::size_t frame_len) {
    if (frame_len == 0) throw ConfigError("frame length must be at least one sample");
    const std::size_t n_frames = x.size() / frame_len;
    std::vector<double> energies(n_frames, 0.0);
    for (std::size_t i = 0; i < n_frames; ++i) {
        double e = 0.0;
        for (double v : x.subspan(i * frame_len, frame_len)) e += v * v;
        energies[i] = e;
    }
    return energies;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DegenerateInputError("median of an empty list");
    const std::size_t mid = values.size() / 2;
    std::ranges::nth_element(values, values.begin() + static_cast<std::ptrdiff_t>(mid));
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

IntervalSet flag_noisy_frames(std::span<const double> x, std::size_t frame_len, double threshold) {
    const auto energies = frame_energies(x, frame_len);
    const std::size_t n = energies.size();
    if (n < 3)
        throw DegenerateInputError("noise gate needs at least 3 full frames, got " + std::to_string(n));
    const double m = median(std::vector<double>(energies.begin() + 1, energies.end() - 1));
    const double limit = threshold * m;
    std::vector<Interval> flagged;
    for (std::size_t i = 0; i < n; ++i)
        if (energies[i] > limit) flagged.push_back({i * frame_len, (i + 1) * frame_len - 1});
    return IntervalSet(x.size(), std::move(flagged));
}

IntervalSet flag_noisy_frames(std::span<const double> x, double fs, double frame_seconds, double threshold) {
    return flag_noisy_frames(x, frame_samples(fs, frame_seconds), threshold);
}

IntervalSet flag_boundaries(const Recording& rec, const GateConfig& cfg) {
    const std::size_t len = rec.length();
    const auto b = static_cast<std::size_t>(std::llround(cfg.boundary_flag * rec.fs()));
    if (b == 0) return IntervalSet(len);
    if (len <= 2 * b) return IntervalSet(len, {{0, len - 1}});
    std::vector<Interval> ivs{{0, b - 1}, {len - b, len - 1}};
    for (auto j : rec.join_markers()) {
        const std::size_t s = j >= b ? j - b : 0;
        const std::size_t e = std::min(j + b - 1, len - 1);
        ivs.push_back({s, e});
    }
    return IntervalSet(len, std::move(ivs));
}

double GateResult::rejected_fraction() const {
    if (noisy.domain_len() == 0) return 0.0;
    return static_cast<double>(noisy.covered()) / static_cast<double>(noisy.domain_len());
}

GateResult gate_recording(const Recording& rec, const GateConfig& cfg) {
    cfg.validate();
    const ChannelKind nm_kind(MicKind::NM, cfg.nm_channel);
    if (rec.find(nm_kind) < 0)
        throw ConfigError("recording '" + rec.subject_id() + "' lacks noise-mic channel " + nm_kind.token());

    GateResult result;
    const auto hm_frame = frame_samples(rec.fs(), cfg.frame_len_hm);
    for (const auto& ch : rec.channels())
        if (ch.kind.kind == MicKind::HM)
            result.per_channel.push_back({ch.kind, flag_noisy_frames(ch.samples, hm_frame, cfg.threshold)});
    if (result.per_channel.empty())
        throw ConfigError("recording '" + rec.subject_id() + "' has no heart-mic channel");
    result.per_channel.push_back(
        {nm_kind, flag_noisy_frames(rec.channel(nm_kind).samples, frame_samples(rec.fs(), cfg.frame_len_nm),
                                    cfg.threshold)});
    result.boundaries = flag_boundaries(rec, cfg);

    std::vector<IntervalSet> all;
    for (const auto& c : result.per_channel) all.push_back(c.noisy);
    all.push_back(result.boundaries);
    result.noisy = unite(all);
    result.clean = complement(result.noisy);
    return result;
}

IntervalSet detect_clean_intervals(const Recording& rec, const GateConfig& cfg) {
    return gate_recording(rec, cfg).clean;
}

} // namespace pcgkit
