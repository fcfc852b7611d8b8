#include "pcgkit/intervals.hpp"

#include "pcgkit/errors.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace pcgkit {

IntervalSet::IntervalSet(std::size_t domain_len, std::vector<Interval> intervals) : domain_len_(domain_len) {
    for (const auto& iv : intervals) {
        if (iv.start > iv.end) throw DataError("interval start after end");
        if (iv.end >= domain_len_)
            throw DataError("interval [" + std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                            "] outside domain of length " + std::to_string(domain_len_));
    }
    std::ranges::sort(intervals, [](const Interval& a, const Interval& b) { return a.start < b.start; });
    for (const auto& iv : intervals) {
        if (!intervals_.empty() && iv.start <= intervals_.back().end + 1)
            intervals_.back().end = std::max(intervals_.back().end, iv.end);
        else
            intervals_.push_back(iv);
    }
}

std::size_t IntervalSet::covered() const {
    std::size_t n = 0;
    for (const auto& iv : intervals_) n += iv.length();
    return n;
}

bool IntervalSet::contains(std::size_t sample) const { return intersects(Interval{sample, sample}); }

bool IntervalSet::intersects(const Interval& iv) const {
    // First interval whose end >= iv.start.
    auto it = std::ranges::lower_bound(intervals_, iv.start, {}, &Interval::end);
    return it != intervals_.end() && it->start <= iv.end;
}

std::vector<bool> IntervalSet::to_mask() const {
    std::vector<bool> mask(domain_len_, false);
    for (const auto& iv : intervals_)
        for (std::size_t i = iv.start; i <= iv.end; ++i) mask[i] = true;
    return mask;
}

IntervalSet IntervalSet::from_mask(const std::vector<bool>& mask) {
    std::vector<Interval> out;
    std::size_t i = 0;
    while (i < mask.size()) {
        if (!mask[i]) {
            ++i;
            continue;
        }
        const std::size_t s = i;
        while (i < mask.size() && mask[i]) ++i;
        out.push_back({s, i - 1});
    }
    return IntervalSet(mask.size(), std::move(out));
}

IntervalSet unite(std::span<const IntervalSet> sets) {
    if (sets.empty()) return IntervalSet();
    const auto domain = sets.front().domain_len();
    std::vector<Interval> all;
    for (const auto& s : sets) {
        if (s.domain_len() != domain) throw IncompatibleError("interval sets have different domain lengths");
        all.insert(all.end(), s.intervals().begin(), s.intervals().end());
    }
    return IntervalSet(domain, std::move(all));
}

IntervalSet unite(const IntervalSet& a, const IntervalSet& b) {
    const IntervalSet pair[] = {a, b};
    return unite(pair);
}

IntervalSet complement(const IntervalSet& set) {
    std::vector<Interval> gaps;
    std::size_t next = 0;
    for (const auto& iv : set.intervals()) {
        if (iv.start > next) gaps.push_back({next, iv.start - 1});
        next = iv.end + 1;
    }
    if (next < set.domain_len()) gaps.push_back({next, set.domain_len() - 1});
    return IntervalSet(set.domain_len(), std::move(gaps));
}

void write_intervals(std::ostream& out, const IntervalFileHeader& header, const IntervalSet& set) {
    out << "# pcgkit intervals v1\n"
        << "subject_id " << header.subject_id << '\n'
        << "fs " << header.fs << '\n'
        << "domain_len " << set.domain_len() << '\n'
        << "kind " << header.kind << '\n';
    for (const auto& iv : set.intervals()) out << iv.start << ' ' << iv.end << '\n';
}

std::pair<IntervalFileHeader, IntervalSet> read_intervals(std::istream& in) {
    IntervalFileHeader header;
    std::size_t domain = 0;
    bool have_domain = false;
    std::vector<Interval> ivs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "subject_id") {
            ls >> header.subject_id;
        } else if (key == "fs") {
            ls >> header.fs;
        } else if (key == "domain_len") {
            ls >> domain;
            have_domain = true;
        } else if (key == "kind") {
            ls >> header.kind;
        } else {
            std::istringstream ps(line);
            Interval iv;
            if (!(ps >> iv.start >> iv.end)) throw FormatError("bad interval line '" + line + "'");
            ivs.push_back(iv);
            continue;
        }
        if (!ls) throw FormatError("bad interval header line '" + line + "'");
    }
    if (!have_domain) throw FormatError("interval file lacks domain_len");
    return {header, IntervalSet(domain, std::move(ivs))};
}

} // namespace pcgkit
