#include "pcgkit/segmenter.hpp"

#include "pcgkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace pcgkit {

namespace {
__extension__ using u128 = unsigned __int128; // exact f_class * length products
} // namespace

std::vector<Interval> clean_segments(const IntervalSet& clean, double fs, double min_seconds) {
    const auto min_len = static_cast<std::size_t>(std::llround(min_seconds * fs));
    std::vector<Interval> out;
    for (const auto& iv : clean.intervals())
        if (iv.length() >= min_len) out.push_back(iv);
    return out;
}

ClassTargets class_targets(std::size_t n_cad, std::size_t n_nor, std::size_t f_base) {
    if (n_cad == 0 || n_nor == 0 || f_base == 0) throw ConfigError("class_targets needs non-zero counts");
    // round(major / minor * f_base), half up, in exact integer arithmetic
    auto scaled = [f_base](std::size_t major, std::size_t minor) {
        return (2 * major * f_base + minor) / (2 * minor);
    };
    if (n_cad >= n_nor) return {f_base, scaled(n_cad, n_nor)};
    return {scaled(n_nor, n_cad), f_base};
}

std::vector<std::size_t> allocate_fragments(std::span<const std::size_t> lengths, std::size_t f_class) {
    if (lengths.empty()) throw DataError("allocate_fragments: no segments");
    if (std::ranges::any_of(lengths, [](std::size_t l) { return l == 0; }))
        throw DataError("allocate_fragments: zero-length segment");
    const auto total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});

    std::vector<std::size_t> counts(lengths.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        counts[i] = static_cast<std::size_t>(static_cast<u128>(f_class) * lengths[i] / total);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(lengths.size());
    std::iota(order.begin(), order.end(), 0);
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
    const std::size_t remainder = f_class - assigned;
    if (remainder > lengths.size()) throw InvariantError("allocation remainder exceeds segment count");
    for (std::size_t r = 0; r < remainder; ++r) ++counts[order[r]];
    return counts;
}

std::vector<std::size_t> fragment_starts(std::size_t segment_len, std::size_t frag_len, std::size_t count) {
    if (segment_len < frag_len) throw ContractError("segment shorter than one fragment");
    if (count == 0) return {};
    if (count == 1) return {0};
    const std::size_t span = segment_len - frag_len;
    const std::size_t gaps = count - 1;
    std::vector<std::size_t> starts(count);
    for (std::size_t j = 0; j < count; ++j) starts[j] = (2 * j * span + gaps) / (2 * gaps);
    return starts;
}

std::vector<Fragment> extract_fragments(const Recording& rec, const Interval& segment, std::size_t count,
                                        std::size_t frag_samples) {
    if (segment.end >= rec.length()) throw DataError("segment outside recording");
    std::vector<Fragment> out;
    for (auto offset : fragment_starts(segment.length(), frag_samples, count)) {
        Fragment f;
        f.subject_id = rec.subject_id();
        f.label = rec.label();
        f.start = segment.start + offset;
        for (const auto& ch : rec.channels()) {
            const auto first = ch.samples.begin() + static_cast<std::ptrdiff_t>(f.start);
            f.channels.push_back(Channel{ch.kind, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(frag_samples))});
        }
        out.push_back(std::move(f));
    }
    return out;
}

SegmentPlan plan_subject(const Recording& rec, const IntervalSet& clean, std::size_t f_class,
                         const SegmentConfig& cfg) {
    if (clean.domain_len() != rec.length()) throw IncompatibleError("clean set does not match recording length");
    SegmentPlan plan;
    plan.subject_id = rec.subject_id();
    plan.f_class = f_class;
    plan.frag_samples = static_cast<std::size_t>(std::llround(cfg.frag_len * rec.fs()));
    const double min_seconds = std::max(cfg.min_segment, cfg.frag_len);
    const auto segs = clean_segments(clean, rec.fs(), min_seconds);
    if (segs.empty())
        throw DataError("subject '" + rec.subject_id() + "' has no clean segment of at least " +
                        std::to_string(min_seconds) + " s");
    std::vector<std::size_t> lengths;
    for (const auto& s : segs) lengths.push_back(s.length());
    const auto counts = allocate_fragments(lengths, f_class);
    for (std::size_t i = 0; i < segs.size(); ++i) plan.segments.push_back({segs[i], counts[i]});
    return plan;
}

std::vector<Fragment> extract_plan(const Recording& rec, const SegmentPlan& plan) {
    std::vector<Fragment> out;
    for (const auto& seg : plan.segments) {
        auto frags = extract_fragments(rec, seg.segment, seg.count, plan.frag_samples);
        std::ranges::move(frags, std::back_inserter(out));
    }
    return out;
}

void write_plan(std::ostream& out, const SegmentPlan& plan) {
    for (const auto& s : plan.segments)
        out << plan.subject_id << ' ' << s.segment.start << ' ' << s.segment.end << ' ' << s.count << '\n';
}

} // namespace pcgkit
