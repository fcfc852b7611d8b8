#pragma once

#include "pcgkit/core.hpp"
#include "pcgkit/intervals.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pcgkit {

struct SegmentConfig {
    double frag_len = 4.0;    ///< seconds per fragment
    double min_segment = 4.0; ///< shorter clean runs are discarded
};

struct PlannedSegment {
    Interval segment;
    std::size_t count = 0; ///< fragments drawn from this segment
};

struct SegmentPlan {
    std::string subject_id;
    std::vector<PlannedSegment> segments;
    std::size_t f_class = 0;
    std::size_t frag_samples = 0;
};

struct Fragment {
    std::string subject_id;
    Label label = Label::NOR;
    std::size_t start = 0; ///< absolute sample index in the subject recording
    std::vector<Channel> channels;
};

struct ClassTargets {
    std::size_t cad = 0;
    std::size_t nor = 0;

    std::size_t for_label(Label l) const { return l == Label::CAD ? cad : nor; }
    friend bool operator==(const ClassTargets&, const ClassTargets&) = default;
};

/// Clean runs of at least min_seconds, order preserved.
std::vector<Interval> clean_segments(const IntervalSet& clean, double fs, double min_seconds = 4.0);

/**
 * Per-subject fragment targets that balance the classes: the majority class
 * gets f_base per subject, the minority f_base scaled by the subject-count
 * ratio, rounded half up.
 */
ClassTargets class_targets(std::size_t n_cad, std::size_t n_nor, std::size_t f_base);

/**
 * Split `f_class` across segments in proportion to length (floored), then
 * hand the remainder out one each to the longest segments, earlier segment
 * first on ties. The result always sums to f_class.
 */
std::vector<std::size_t> allocate_fragments(std::span<const std::size_t> lengths, std::size_t f_class);

/// Evenly spaced fragment starts spanning a segment of `segment_len` samples.
std::vector<std::size_t> fragment_starts(std::size_t segment_len, std::size_t frag_len, std::size_t count);

/// Cut `count` fragments from `segment` of the recording.
std::vector<Fragment> extract_fragments(const Recording& rec, const Interval& segment, std::size_t count,
                                        std::size_t frag_samples);

/// Throws DataError when no clean segment is long enough.
SegmentPlan plan_subject(const Recording& rec, const IntervalSet& clean, std::size_t f_class,
                         const SegmentConfig& cfg = {});

/// All fragments of a plan, in segment order.
std::vector<Fragment> extract_plan(const Recording& rec, const SegmentPlan& plan);

/// Audit format: `subject start end F_i` per line.
void write_plan(std::ostream& out, const SegmentPlan& plan);

} // namespace pcgkit
