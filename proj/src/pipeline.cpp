#include "pcgkit/pipeline.hpp"

#include "pcgkit/errors.hpp"
#include "pcgkit/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace pcgkit {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

namespace {

std::string trim_copy(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

std::size_t to_count(const std::string& key, const std::string& v) {
    const auto i = to_int(key, v);
    if (i < 0) throw ConfigError("config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(i);
}

std::string channel_file(const ChannelKind& k) {
    return std::string(to_string(k.kind)) + std::to_string(k.stethoscope) + ".wav";
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(p, mode | std::ios::trunc);
    if (!f) throw DataError("cannot write " + p.string());
    return f;
}

} // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
    const auto& v = value;
    if (key == "schema_version") {
        if (to_int(key, v) != kConfigSchemaVersion)
            throw ConfigError("unsupported config schema_version " + v + " (expected " +
                              std::to_string(kConfigSchemaVersion) + ")");
    } else if (key == "seed") seed = static_cast<std::uint64_t>(to_count(key, v));
    else if (key == "f_base") f_base = to_count(key, v);
    else if (key == "gate.frame_len_hm") gate.frame_len_hm = to_double(key, v);
    else if (key == "gate.frame_len_nm") gate.frame_len_nm = to_double(key, v);
    else if (key == "gate.threshold") gate.threshold = to_double(key, v);
    else if (key == "gate.nm_channel") gate.nm_channel = static_cast<int>(to_int(key, v));
    else if (key == "gate.boundary_flag") gate.boundary_flag = to_double(key, v);
    else if (key == "preprocess.band_low") preprocess.band_low = to_double(key, v);
    else if (key == "preprocess.band_high") preprocess.band_high = to_double(key, v);
    else if (key == "preprocess.filter_order") preprocess.filter_order = static_cast<int>(to_int(key, v));
    else if (key == "preprocess.spike_window") preprocess.spike_window = to_double(key, v);
    else if (key == "preprocess.spike_ratio") preprocess.spike_ratio = to_double(key, v);
    else if (key == "preprocess.k_peaks") preprocess.k_peaks = static_cast<int>(to_int(key, v));
    else if (key == "preprocess.peak_min_separation") preprocess.peak_min_separation = to_double(key, v);
    else if (key == "segment.frag_len") segment.frag_len = to_double(key, v);
    else if (key == "segment.min_segment") segment.min_segment = to_double(key, v);
    else if (key == "mfcc.n_mfcc") mfcc.n_mfcc = to_count(key, v);
    else if (key == "mfcc.n_mels") mfcc.n_mels = to_count(key, v);
    else if (key == "mfcc.f_min") mfcc.f_min = to_double(key, v);
    else if (key == "mfcc.f_max") mfcc.f_max = to_double(key, v);
    else if (key == "mfcc.win_len") mfcc.win_len = to_count(key, v);
    else if (key == "mfcc.hop") mfcc.hop = to_count(key, v);
    else if (key == "mfcc.log_floor") mfcc.log_floor = to_double(key, v);
    else if (key == "loss.alpha") loss.alpha = to_double(key, v);
    else if (key == "loss.beta") loss.beta = to_double(key, v);
    else if (key == "loss.lambda_c") loss.lambda_c = to_double(key, v);
    else if (key == "loss.temperature") loss.temperature = to_double(key, v);
    else if (key == "split.folds") split.folds = static_cast<int>(to_int(key, v));
    else if (key == "split.fold") split.fold = static_cast<int>(to_int(key, v));
    else if (key == "synth.n_subjects") synth.n_subjects = to_count(key, v);
    else if (key == "synth.cad_fraction") synth.cad_fraction = to_double(key, v);
    else if (key == "synth.fs") synth.fs = static_cast<int>(to_int(key, v));
    else if (key == "synth.duration") synth.duration = to_double(key, v);
    else if (key == "synth.takes_max") synth.takes_max = static_cast<int>(to_int(key, v));
    else if (key == "synth.events_max") synth.events_max = static_cast<int>(to_int(key, v));
    else if (key == "synth.event_gain_min") synth.event_gain_min = to_double(key, v);
    else if (key == "synth.event_gain_max") synth.event_gain_max = to_double(key, v);
    else if (key == "synth.murmur_gain") synth.murmur_gain = to_double(key, v);
    else if (key == "features.channels") {
        feature_channels.clear();
        std::stringstream ss(v);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim_copy(tok);
            if (tok.empty()) continue;
            try {
                feature_channels.push_back(ChannelKind::parse(tok));
            } catch (const Error& e) {
                throw ConfigError(std::string("features.channels: ") + e.what());
            }
        }
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

PipelineConfig PipelineConfig::parse(std::string_view text) {
    PipelineConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto t = trim_copy(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        cfg.set(trim_copy(std::string_view(t).substr(0, eq)), trim_copy(std::string_view(t).substr(eq + 1)));
    }
    return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string PipelineConfig::canonical() const {
    std::ostringstream s;
    s.precision(17);
    s << "schema_version = " << kConfigSchemaVersion << '\n'
      << "seed = " << seed << '\n'
      << "f_base = " << f_base << '\n'
      << "gate.frame_len_hm = " << gate.frame_len_hm << '\n'
      << "gate.frame_len_nm = " << gate.frame_len_nm << '\n'
      << "gate.threshold = " << gate.threshold << '\n'
      << "gate.nm_channel = " << gate.nm_channel << '\n'
      << "gate.boundary_flag = " << gate.boundary_flag << '\n'
      << "preprocess.band_low = " << preprocess.band_low << '\n'
      << "preprocess.band_high = " << preprocess.band_high << '\n'
      << "preprocess.filter_order = " << preprocess.filter_order << '\n'
      << "preprocess.spike_window = " << preprocess.spike_window << '\n'
      << "preprocess.spike_ratio = " << preprocess.spike_ratio << '\n'
      << "preprocess.k_peaks = " << preprocess.k_peaks << '\n'
      << "preprocess.peak_min_separation = " << preprocess.peak_min_separation << '\n'
      << "segment.frag_len = " << segment.frag_len << '\n'
      << "segment.min_segment = " << segment.min_segment << '\n'
      << "mfcc.n_mfcc = " << mfcc.n_mfcc << '\n'
      << "mfcc.n_mels = " << mfcc.n_mels << '\n'
      << "mfcc.f_min = " << mfcc.f_min << '\n'
      << "mfcc.f_max = " << mfcc.f_max << '\n'
      << "mfcc.win_len = " << mfcc.win_len << '\n'
      << "mfcc.hop = " << mfcc.hop << '\n'
      << "mfcc.log_floor = " << mfcc.log_floor << '\n'
      << "loss.alpha = " << loss.alpha << '\n'
      << "loss.beta = " << loss.beta << '\n'
      << "loss.lambda_c = " << loss.lambda_c << '\n'
      << "loss.temperature = " << loss.temperature << '\n'
      << "split.folds = " << split.folds << '\n'
      << "split.fold = " << split.fold << '\n'
      << "synth.n_subjects = " << synth.n_subjects << '\n'
      << "synth.cad_fraction = " << synth.cad_fraction << '\n'
      << "synth.fs = " << synth.fs << '\n'
      << "synth.duration = " << synth.duration << '\n'
      << "synth.takes_max = " << synth.takes_max << '\n'
      << "synth.events_max = " << synth.events_max << '\n'
      << "synth.event_gain_min = " << synth.event_gain_min << '\n'
      << "synth.event_gain_max = " << synth.event_gain_max << '\n'
      << "synth.murmur_gain = " << synth.murmur_gain << '\n'
      << "features.channels = ";
    for (std::size_t i = 0; i < feature_channels.size(); ++i) s << (i ? "," : "") << feature_channels[i].token();
    s << '\n';
    return s.str();
}

std::string PipelineConfig::hash() const { return fnv1a_hex(canonical()); }

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::clamp<long long>(jobs, 1, static_cast<long long>(std::max<std::size_t>(n, 1))));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// synth

namespace {

std::string subject_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%03zu", i + 1);
    return buf;
}

std::vector<NoiseEvent> random_events(SynthRng& rng, const SynthDatasetConfig& sc, int n_steth) {
    std::vector<NoiseEvent> events;
    const auto count = static_cast<int>(rng.bits() % static_cast<std::uint64_t>(sc.events_max + 1));
    for (int e = 0; e < count; ++e) {
        NoiseEvent ev;
        ev.gain = rng.uniform(sc.event_gain_min, sc.event_gain_max);
        const auto pick = rng.bits() % 3;
        if (pick == 0) {
            ev.kind = NoiseKind::Burst;
            ev.target = NoiseTarget::nm();
            ev.duration = rng.uniform(0.25, 1.0);
        } else if (pick == 1) {
            ev.kind = NoiseKind::Burst;
            ev.target = NoiseTarget::all_hm();
            ev.duration = rng.uniform(2.5, 4.0);
        } else {
            ev.kind = NoiseKind::Friction;
            ev.target = NoiseTarget::hm(1 + static_cast<int>(rng.bits() % static_cast<std::uint64_t>(n_steth)));
            ev.duration = rng.uniform(2.5, 5.0);
        }
        ev.onset = rng.uniform(2.0, sc.duration - 2.0 - ev.duration);
        events.push_back(ev);
    }
    return events;
}

} // namespace

SynthSummary cmd_synth(const PipelineConfig& cfg, const fs::path& out_dir, int jobs) {
    const auto& sc = cfg.synth;
    if (sc.n_subjects == 0) throw ConfigError("synth.n_subjects must be positive");
    if (sc.takes_max < 1 || sc.events_max < 0) throw ConfigError("synth.takes_max >= 1 and synth.events_max >= 0");
    if (!(sc.cad_fraction >= 0 && sc.cad_fraction <= 1)) throw ConfigError("synth.cad_fraction must be in [0, 1]");
    if (!(sc.event_gain_min > 0) || sc.event_gain_max < sc.event_gain_min) throw ConfigError("bad synth event gains");
    if (sc.duration < 15.0) throw ConfigError("synth.duration must be >= 15 s");
    ensure_dir(out_dir);
    ensure_dir(out_dir / "subjects");

    const auto n_cad = static_cast<std::size_t>(std::llround(sc.cad_fraction * static_cast<double>(sc.n_subjects)));
    std::vector<std::string> manifest_lines(sc.n_subjects);
    parallel_for(sc.n_subjects, jobs, [&](std::size_t i) {
        const auto id = subject_name(i);
        const Label label = i < n_cad ? Label::CAD : Label::NOR;
        SynthRng rng(cfg.seed * 1000003ULL + i);
        const int takes = 1 + static_cast<int>(rng.bits() % static_cast<std::uint64_t>(sc.takes_max));
        const auto dir = out_dir / "subjects" / id;
        ensure_dir(dir);
        std::ostringstream lines;
        for (int t = 0; t < takes; ++t) {
            SynthParams p;
            p.fs = sc.fs;
            p.duration = sc.duration;
            p.heart_rate = rng.uniform(60.0, 90.0);
            p.subject_id = id;
            p.label = label;
            p.murmur_gain = label == Label::CAD ? sc.murmur_gain : 0.0;
            const auto take_seed = rng.bits();
            const auto clean = synth_pcg(p, take_seed);
            const auto events = random_events(rng, sc, p.n_stethoscopes);
            const auto injected = inject_noise(clean, events, take_seed ^ 0x5bd1e995ULL, p.nm_channel);

            double peak = 0.0;
            for (const auto& ch : injected.recording.channels())
                for (double v : ch.samples) peak = std::max(peak, std::abs(v));
            const double scale = peak > 0.95 ? 0.95 / peak : 1.0;

            const std::string stem = "take" + std::to_string(t) + "_";
            for (const auto& ch : injected.recording.channels()) {
                std::vector<double> scaled(ch.samples);
                for (double& v : scaled) v *= scale;
                const auto name = stem + channel_file(ch.kind);
                write_wav(dir / name, p.fs, scaled, WavEncoding::Float32);
                lines << id << '\t' << to_string(label) << '\t' << t << '\t' << ch.kind.token() << '\t'
                      << "subjects/" << id << '/' << name << '\n';
            }
            auto truth = open_out(dir / (stem + "truth.intervals"));
            write_intervals(truth, {id, p.fs, "noisy"}, injected.truth);
        }
        manifest_lines[i] = lines.str();
    });

    auto manifest = open_out(out_dir / "manifest.tsv");
    for (const auto& l : manifest_lines) manifest << l;
    auto info = open_out(out_dir / "synth_info.txt");
    info << "generator " << kSynthAlgorithm << "\nseed " << cfg.seed << "\nconfig " << cfg.hash()
         << "\nsubjects " << sc.n_subjects << "\ncad " << n_cad << '\n';
    return {out_dir / "manifest.tsv", sc.n_subjects, n_cad};
}

// ---------------------------------------------------------------------------
// condition

std::size_t ConditionSummary::count(const std::string& status) const {
    return static_cast<std::size_t>(std::ranges::count(entries, status, &ConditionEntry::status));
}

ConditionSummary cmd_condition(const fs::path& manifest_path, const PipelineConfig& cfg, const fs::path& out_dir,
                               int jobs) {
    cfg.gate.validate();
    const auto manifest = load_manifest(manifest_path);
    ensure_dir(out_dir);

    ConditionSummary summary;
    summary.entries.resize(manifest.entries.size());
    std::vector<std::string> index_lines(manifest.entries.size());
    std::once_flag sos_dumped;

    parallel_for(manifest.entries.size(), jobs, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        auto& row = summary.entries[i];
        row.subject_id = entry.subject_id;
        row.label = entry.label;
        try {
            const auto rec = load_subject(entry);
            row.length = rec.length();
            cfg.preprocess.validate(rec.fs());
            const auto gate = gate_recording(rec, cfg.gate);
            row.rejected_fraction = gate.rejected_fraction();

            const auto dir = out_dir / entry.subject_id;
            ensure_dir(dir);
            {
                auto f = open_out(dir / "clean.intervals");
                write_intervals(f, {entry.subject_id, rec.fs(), "clean"}, gate.clean);
                auto g = open_out(dir / "noisy.intervals");
                write_intervals(g, {entry.subject_id, rec.fs(), "noisy"}, gate.noisy);
            }
            std::string tokens;
            for (const auto& ch : rec.channels()) {
                const auto processed = condition_channel(ch.samples, rec.fs(), cfg.preprocess);
                write_wav(dir / channel_file(ch.kind), rec.fs(), processed, WavEncoding::Float32);
                tokens += (tokens.empty() ? "" : ",") + ch.kind.token();
            }
            std::call_once(sos_dumped, [&] {
                auto f = open_out(out_dir / "filter_sos.txt");
                f << "# fs " << rec.fs() << '\n';
                write_sos(f, design_butterworth_bandpass(cfg.preprocess.filter_order, cfg.preprocess.band_low,
                                                         cfg.preprocess.band_high, rec.fs()));
            });

            const double min_seconds = std::max(cfg.segment.min_segment, cfg.segment.frag_len);
            const bool usable = !clean_segments(gate.clean, rec.fs(), min_seconds).empty();
            row.status = usable ? "ok" : "skip";
            if (!usable) row.message = "no clean segment of at least " + std::to_string(min_seconds) + " s";
            std::ostringstream line;
            line << entry.subject_id << '\t' << to_string(entry.label) << '\t' << row.status << '\t' << rec.fs()
                 << '\t' << rec.length() << '\t' << tokens << '\n';
            index_lines[i] = line.str();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            row.status = "fail";
            row.message = e.what();
        }
    });

    auto index = open_out(out_dir / "conditioned.tsv");
    index << "# pcgkit conditioned v1 config=" << cfg.hash() << '\n';
    for (const auto& l : index_lines) index << l;

    auto report = open_out(out_dir / "condition_summary.tsv");
    report << "subject\tlabel\tstatus\tlength\trejected_fraction\tmessage\n";
    report.precision(6);
    for (const auto& r : summary.entries)
        report << r.subject_id << '\t' << to_string(r.label) << '\t' << r.status << '\t' << r.length << '\t'
               << std::fixed << r.rejected_fraction << '\t' << r.message << '\n';
    return summary;
}

// ---------------------------------------------------------------------------
// featurize

SubjectSplits make_splits(std::vector<SubjectRef> subjects, const SplitConfig& split, std::uint64_t seed) {
    if (split.folds < 3) throw ConfigError("split.folds must be >= 3 (train, validation and test folds)");
    if (split.fold < 0 || split.fold >= split.folds) throw ConfigError("split.fold out of range");
    std::ranges::sort(subjects, {}, &SubjectRef::subject_id);
    std::set<std::string> unique;
    for (const auto& s : subjects)
        if (!unique.insert(s.subject_id).second) throw DataError("duplicate subject '" + s.subject_id + "'");

    SubjectSplits out;
    SynthRng rng(seed ^ 0xC0FFEEULL);
    for (Label label : {Label::CAD, Label::NOR}) {
        std::vector<SubjectRef> group;
        for (const auto& s : subjects)
            if (s.label == label) group.push_back(s);
        for (std::size_t i = group.size(); i > 1; --i) std::swap(group[i - 1], group[rng.bits() % i]);
        for (std::size_t i = 0; i < group.size(); ++i) {
            const int fold = static_cast<int>(i % static_cast<std::size_t>(split.folds));
            if (fold == split.fold) out.test.push_back(group[i]);
            else if (fold == (split.fold + 1) % split.folds) out.val.push_back(group[i]);
            else out.train.push_back(group[i]);
        }
    }
    for (auto* part : {&out.train, &out.val, &out.test}) std::ranges::sort(*part, {}, &SubjectRef::subject_id);

    std::set<std::string> seen;
    for (const auto* part : {&out.train, &out.val, &out.test})
        for (const auto& s : *part)
            if (!seen.insert(s.subject_id).second)
                throw InvariantError("subject '" + s.subject_id + "' assigned to more than one split");
    return out;
}

namespace {

struct ConditionedSubject {
    SubjectRef ref;
    int fs = 0;
    std::vector<ChannelKind> channels;
};

std::vector<ConditionedSubject> read_conditioned_index(const fs::path& dir) {
    std::ifstream in(dir / "conditioned.tsv");
    if (!in) throw DataError("cannot open " + (dir / "conditioned.tsv").string());
    std::vector<ConditionedSubject> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::string id, label, status, tokens;
        int fs_hz = 0;
        std::size_t len = 0;
        if (!std::getline(ls, id, '\t') || !std::getline(ls, label, '\t') || !std::getline(ls, status, '\t') ||
            !(ls >> fs_hz >> len) || !(ls >> tokens))
            throw FormatError("bad conditioned.tsv line '" + line + "'");
        ConditionedSubject s;
        s.ref = {id, parse_label(label)};
        s.fs = fs_hz;
        std::stringstream ts(tokens);
        std::string tok;
        while (std::getline(ts, tok, ',')) s.channels.push_back(ChannelKind::parse(tok));
        out.push_back(std::move(s));
    }
    return out;
}

struct SubjectFeatures {
    std::vector<FeatureMatrix> fragments;
    SegmentPlan plan;
    std::string error;
};

SubjectFeatures featurize_subject(const fs::path& dir, const ConditionedSubject& subject,
                                  const std::vector<ChannelKind>& wanted, std::size_t f_class,
                                  const PipelineConfig& cfg, const MfccExtractor& extractor) {
    SubjectFeatures out;
    const auto sdir = dir / subject.ref.subject_id;
    std::ifstream iv(sdir / "clean.intervals");
    if (!iv) throw DataError("missing clean.intervals for '" + subject.ref.subject_id + "'");
    const auto clean = read_intervals(iv).second;

    std::vector<Channel> channels;
    int fs_hz = 0;
    for (const auto& k : wanted) {
        auto wav = load_wav(sdir / channel_file(k));
        fs_hz = wav.fs;
        channels.push_back({k, std::move(wav.samples)});
    }
    const Recording rec(subject.ref.subject_id, subject.ref.label, fs_hz, std::move(channels));
    out.plan = plan_subject(rec, clean, f_class, cfg.segment);
    for (const auto& frag : extract_plan(rec, out.plan)) {
        std::vector<FeatureMatrix> per_channel;
        for (const auto& ch : frag.channels) {
            FeatureMatrix fm;
            fm.values = extractor.mfcc(ch.samples);
            fm.subject_id = frag.subject_id;
            fm.label = frag.label;
            fm.start = frag.start;
            fm.channels = {ch.kind};
            per_channel.push_back(std::move(fm));
        }
        out.fragments.push_back(fuse_channels(per_channel));
    }
    return out;
}

} // namespace

FeaturizeSummary cmd_featurize(const fs::path& conditioned_dir, const PipelineConfig& cfg, const fs::path& out_dir,
                               int jobs) {
    if (cfg.f_base == 0) throw ConfigError("f_base must be positive");
    const auto subjects = read_conditioned_index(conditioned_dir);
    if (subjects.empty()) throw DataError("no conditioned subjects in " + conditioned_dir.string());
    const int fs_hz = subjects.front().fs;
    for (const auto& s : subjects)
        if (s.fs != fs_hz) throw IncompatibleError("conditioned subjects have different sample rates");
    cfg.mfcc.validate(fs_hz);
    ensure_dir(out_dir);

    std::vector<SubjectRef> refs;
    for (const auto& s : subjects) refs.push_back(s.ref);
    const auto splits = make_splits(refs, cfg.split, cfg.seed);

    std::map<std::string, const ConditionedSubject*> by_id;
    for (const auto& s : subjects) by_id[s.ref.subject_id] = &s;

    std::vector<ChannelKind> wanted = cfg.feature_channels;
    if (wanted.empty()) {
        for (const auto& k : subjects.front().channels)
            if (k.kind == MicKind::HM) wanted.push_back(k);
        std::ranges::sort(wanted);
    }
    if (wanted.empty()) throw ConfigError("no feature channels available");

    auto count = [](const std::vector<SubjectRef>& part, Label l) {
        return static_cast<std::size_t>(std::ranges::count(part, l, &SubjectRef::label));
    };
    const std::size_t train_cad = count(splits.train, Label::CAD), train_nor = count(splits.train, Label::NOR);
    if (train_cad == 0 || train_nor == 0) throw DataError("training split lacks one of the classes");

    FeaturizeSummary summary;
    summary.train_targets = class_targets(train_cad, train_nor, cfg.f_base);
    const ClassTargets eval_targets{cfg.f_base, cfg.f_base};

    const MfccExtractor extractor(cfg.mfcc, fs_hz);
    const auto cfg_hash = fnv1a_hex(cfg.canonical() + cfg.mfcc.canonical());

    {
        auto f = open_out(out_dir / "splits.tsv");
        f << "# pcgkit splits v1 folds=" << cfg.split.folds << " fold=" << cfg.split.fold << " seed=" << cfg.seed
          << '\n';
        for (const auto& [name, part] : {std::pair{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}})
            for (const auto& s : *part) f << name << '\t' << s.subject_id << '\t' << to_string(s.label) << '\n';
    }

    Standardizer::Accumulator train_stats;
    auto report = open_out(out_dir / "featurize_report.tsv");
    report << "split\tsubject\tlabel\tf_class\tfragments\tstatus\n";

    const int workers = std::max(1, jobs);
    for (const auto& [name, part, targets] :
         {std::tuple{std::string("train"), &splits.train, summary.train_targets},
          {std::string("val"), &splits.val, eval_targets},
          {std::string("test"), &splits.test, eval_targets}}) {
        auto feat = open_out(out_dir / (name + ".feat"), std::ios::out | std::ios::binary);
        auto plan_file = open_out(out_dir / (name + ".plan"));
        std::vector<FeatureIndexEntry> index;
        std::vector<FragmentLabel> truth;
        summary.fragments[name][Label::CAD] = 0;
        summary.fragments[name][Label::NOR] = 0;

        // Bounded batches keep memory flat while output order stays fixed.
        for (std::size_t begin = 0; begin < part->size(); begin += static_cast<std::size_t>(workers)) {
            const std::size_t end = std::min(part->size(), begin + static_cast<std::size_t>(workers));
            std::vector<SubjectFeatures> batch(end - begin);
            parallel_for(end - begin, workers, [&](std::size_t k) {
                const auto& ref = (*part)[begin + k];
                try {
                    batch[k] = featurize_subject(conditioned_dir, *by_id.at(ref.subject_id), wanted,
                                                 targets.for_label(ref.label), cfg, extractor);
                } catch (const ConfigError&) {
                    throw;
                } catch (const Error& e) {
                    batch[k].error = e.what();
                }
            });
            for (std::size_t k = 0; k < batch.size(); ++k) {
                const auto& ref = (*part)[begin + k];
                auto& sf = batch[k];
                const auto f_class = targets.for_label(ref.label);
                if (!sf.error.empty()) {
                    summary.excluded.push_back(name + " " + ref.subject_id + " " + sf.error);
                    report << name << '\t' << ref.subject_id << '\t' << to_string(ref.label) << '\t' << f_class
                           << "\t0\texcluded: " << sf.error << '\n';
                    continue;
                }
                write_plan(plan_file, sf.plan);
                for (std::size_t j = 0; j < sf.fragments.size(); ++j) {
                    const auto& fm = sf.fragments[j];
                    index.push_back(write_feature_record(feat, fm, fs_hz, cfg_hash));
                    truth.push_back({ref.subject_id, j, ref.label});
                    if (name == "train") train_stats.add(fm.values);
                }
                summary.fragments[name][ref.label] += sf.fragments.size();
                report << name << '\t' << ref.subject_id << '\t' << to_string(ref.label) << '\t' << f_class << '\t'
                       << sf.fragments.size() << "\tok\n";
            }
        }
        auto idx = open_out(out_dir / (name + ".idx"));
        write_feature_index(idx, index, name, cfg_hash);
        write_fragment_labels(out_dir / (name + ".truth"), truth);
        std::clog << "featurize: " << name << " CAD=" << summary.fragments[name][Label::CAD]
                  << " NOR=" << summary.fragments[name][Label::NOR] << " fragments\n";
    }

    if (train_stats.frames() == 0) throw DataError("no training fragments were produced");
    const auto stats = train_stats.finish();
    auto norm = open_out(out_dir / "norm_stats.txt");
    stats.write(norm);
    return summary;
}

// ---------------------------------------------------------------------------
// evaluate

std::vector<FragmentLabel> read_fragment_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<FragmentLabel> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        FragmentLabel r;
        std::string label;
        if (!(ls >> r.subject_id >> r.fragment_index >> label))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'subject index label'");
        r.label = parse_label(label);
        out.push_back(std::move(r));
    }
    return out;
}

void write_fragment_labels(const fs::path& path, const std::vector<FragmentLabel>& rows) {
    auto f = open_out(path);
    for (const auto& r : rows) f << r.subject_id << ' ' << r.fragment_index << ' ' << to_string(r.label) << '\n';
}

EvaluateResult evaluate_predictions(const std::vector<FragmentLabel>& preds, const std::vector<FragmentLabel>& truth) {
    std::map<std::pair<std::string, std::size_t>, Label> truth_map;
    std::map<std::string, Label> subject_truth;
    for (const auto& t : truth) {
        if (!truth_map.emplace(std::pair{t.subject_id, t.fragment_index}, t.label).second)
            throw DataError("duplicate truth row for " + t.subject_id + " " + std::to_string(t.fragment_index));
        auto [it, inserted] = subject_truth.emplace(t.subject_id, t.label);
        if (!inserted && it->second != t.label) throw DataError("subject '" + t.subject_id + "' has mixed labels");
    }
    std::vector<Label> p, y;
    std::map<std::string, std::vector<Label>> per_subject;
    std::set<std::pair<std::string, std::size_t>> seen;
    for (const auto& r : preds) {
        const auto key = std::pair{r.subject_id, r.fragment_index};
        const auto it = truth_map.find(key);
        if (it == truth_map.end())
            throw DataError("prediction for unknown fragment " + r.subject_id + " " + std::to_string(r.fragment_index));
        if (!seen.insert(key).second)
            throw DataError("duplicate prediction for " + r.subject_id + " " + std::to_string(r.fragment_index));
        p.push_back(r.label);
        y.push_back(it->second);
        per_subject[r.subject_id].push_back(r.label);
    }
    if (seen.size() != truth_map.size())
        throw DataError("predictions cover " + std::to_string(seen.size()) + " of " +
                        std::to_string(truth_map.size()) + " fragments");

    EvaluateResult result;
    result.fragment = confusion_metrics(p, y, EvalLevel::Fragment);
    std::vector<Label> sp, sy;
    for (const auto& [subject, label] : majority_vote(per_subject)) {
        sp.push_back(label);
        sy.push_back(subject_truth.at(subject));
    }
    result.subject = confusion_metrics(sp, sy, EvalLevel::Subject);
    return result;
}

EvaluateResult cmd_evaluate(const fs::path& pred_file, const fs::path& truth_file, const fs::path& out_dir) {
    const auto result = evaluate_predictions(read_fragment_labels(pred_file), read_fragment_labels(truth_file));
    ensure_dir(out_dir);
    auto f = open_out(out_dir / "fragment_report.txt");
    write_report(f, result.fragment);
    auto s = open_out(out_dir / "subject_report.txt");
    write_report(s, result.subject);
    return result;
}

} // namespace pcgkit
