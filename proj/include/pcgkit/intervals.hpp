#pragma once

#include "pcgkit/core.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pcgkit {

/**
 * Canonical set of sample-index intervals over [0, domain_len).
 *
 * Intervals are sorted, pairwise disjoint and never adjacent: touching or
 * overlapping inputs are merged on construction.
 */
class IntervalSet {
public:
    IntervalSet() = default;
    explicit IntervalSet(std::size_t domain_len) : domain_len_(domain_len) {}

    /// Normalizes arbitrary (unsorted, overlapping) intervals. Throws DataError
    /// for intervals with start > end or end >= domain_len.
    IntervalSet(std::size_t domain_len, std::vector<Interval> intervals);

    std::size_t domain_len() const { return domain_len_; }
    const std::vector<Interval>& intervals() const { return intervals_; }
    bool empty() const { return intervals_.empty(); }
    std::size_t size() const { return intervals_.size(); }

    /// Number of samples covered.
    std::size_t covered() const;
    bool contains(std::size_t sample) const;
    /// True when any sample of [start, end] is covered.
    bool intersects(const Interval& iv) const;

    /// Per-sample mask, mainly for tests and diagnostics.
    std::vector<bool> to_mask() const;
    static IntervalSet from_mask(const std::vector<bool>& mask);

    friend bool operator==(const IntervalSet&, const IntervalSet&) = default;

private:
    std::size_t domain_len_ = 0;
    std::vector<Interval> intervals_;
};

/// Minimal cover of all inputs. Every set must share domain_len.
IntervalSet unite(std::span<const IntervalSet> sets);
IntervalSet unite(const IntervalSet& a, const IntervalSet& b);

/// Gaps of `set` over [0, domain_len).
IntervalSet complement(const IntervalSet& set);

/// Header fields of the interval text format.
struct IntervalFileHeader {
    std::string subject_id;
    int fs = 0;
    std::string kind = "clean";
};

/**
 * Text format:
 *
 *     # pcgkit intervals v1
 *     subject_id <id>
 *     fs <Hz>
 *     domain_len <samples>
 *     kind <clean|noisy>
 *     <start> <end>
 *     ...
 */
void write_intervals(std::ostream& out, const IntervalFileHeader& header, const IntervalSet& set);
std::pair<IntervalFileHeader, IntervalSet> read_intervals(std::istream& in);

} // namespace pcgkit
