// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "oracles.hpp"
#include "pcgkit/noise_gate.hpp"
#include "pcgkit/objective.hpp"
#include "pcgkit/pipeline.hpp"
#include "pcgkit/preprocess.hpp"
#include "pcgkit/segmenter.hpp"
#include "pcgkit/synth.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>

using namespace pcgkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void run(const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-34s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Per-frame truth for one detecting channel.
struct FrameTally {
    std::size_t truth = 0, recalled = 0, clean = 0, false_flags = 0;
};

void tally_channel(FrameTally& t, const IntervalSet& flagged, const std::vector<Interval>& events, std::size_t n,
                   std::size_t frame, std::size_t boundary) {
    for (std::size_t f = 0; f < n / frame; ++f) {
        const std::size_t s = f * frame, e = s + frame - 1;
        std::size_t overlap = 0;
        for (const auto& ev : events) {
            const std::size_t lo = std::max(s, ev.start), hi = std::min(e, ev.end);
            if (lo <= hi) overlap += hi - lo + 1;
        }
        const bool is_flagged = flagged.contains(s);
        if (2 * overlap >= frame) {
            ++t.truth;
            t.recalled += is_flagged;
        } else if (overlap == 0 && s >= boundary && e < n - boundary) {
            ++t.clean;
            t.false_flags += is_flagged;
        }
    }
}

double probe_gain_db(double freq, double fs) {
    const std::size_t n = static_cast<std::size_t>(std::max(20.0, 40.0 / freq) * fs);
    const auto x = testing::sine(n, freq, fs);
    const auto y = bandpass(x, fs, PreprocessConfig{});
    // Least-squares amplitude over the middle half, away from edge transients.
    double ss = 0, cc = 0, sc = 0, ys = 0, yc = 0;
    for (std::size_t i = n / 4; i < 3 * n / 4; ++i) {
        const double ph = 2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs;
        const double s = std::sin(ph), c = std::cos(ph);
        ss += s * s, cc += c * c, sc += s * c, ys += y[i] * s, yc += y[i] * c;
    }
    const double det = ss * cc - sc * sc;
    const double a = (ys * cc - yc * sc) / det, b = (yc * ss - ys * sc) / det;
    return 20.0 * std::log10(std::hypot(a, b));
}

std::vector<std::string> feature_files(const fs::path& dir) {
    std::vector<std::string> out;
    for (const char* split : {"train", "val", "test"})
        for (const char* ext : {".feat", ".idx", ".truth", ".plan"}) out.push_back(std::string(split) + ext);
    out.push_back("norm_stats.txt");
    out.push_back("splits.tsv");
    (void)dir;
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main() {
    std::printf("pcgkit acceptance\n");

    std::vector<std::vector<double>> signals;
    std::vector<std::tuple<double, double, double>> params; // fs, frame seconds, tau
    {
        std::mt19937_64 rng(2024);
        for (int i = 0; i < 200; ++i) {
            const double fs = std::vector<double>{500, 1000, 2000, 4000, 8000, 16000}[rng() % 6];
            const double tf = std::uniform_real_distribution<double>(0.01, 2.5)(rng);
            const double tau = std::uniform_real_distribution<double>(1.0, 5.0)(rng);
            const std::size_t frame = frame_samples(fs, tf);
            const std::size_t n = std::min<std::size_t>(100000, frame * (3 + rng() % 60) + rng() % frame);
            if (n / frame < 3) {
                --i;
                continue;
            }
            auto x = testing::gaussian(rng, n);
            std::exponential_distribution<double> burst(0.5);
            for (std::size_t k = 0; k < 1 + rng() % 5; ++k) {
                const std::size_t at = rng() % n, len = 1 + rng() % (2 * frame);
                const double g = 1.0 + burst(rng);
                for (std::size_t j = at; j < std::min(n, at + len); ++j) x[j] *= g;
            }
            signals.push_back(std::move(x));
            params.emplace_back(fs, tf, tau);
        }
    }

    run("gate matches mask oracle", [&] {
        std::size_t mismatches = 0, flagged = 0;
        double lib_seconds = 0.0;
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < signals.size(); ++i) {
            const auto [fs, tf, tau] = params[i];
            const auto l0 = std::chrono::steady_clock::now();
            const auto set = flag_noisy_frames(signals[i], fs, tf, tau);
            lib_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - l0).count();
            flagged += !set.empty();
            if (set.to_mask() != oracle::noisy_mask(signals[i], frame_samples(fs, tf), tau)) ++mismatches;
        }
        const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return Outcome{mismatches == 0 && total < 5.0,
                       fmt("200 signals, %zu mismatches, %zu with flags, %.3f s total (gate %.3f s)", mismatches,
                           flagged, total, lib_seconds)};
    });

    run("gate efficacy on synthetic truth", [&] {
        const GateConfig cfg;
        const int fs = 4000;
        FrameTally noisy_runs, clean_runs;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            SynthRng rng(seed + 5000);
            SynthParams p;
            p.heart_rate = rng.uniform(55.0, 95.0);
            const auto rec = synth_pcg(p, seed);
            std::vector<NoiseEvent> events;
            const int count = 1 + static_cast<int>(rng.bits() % 3);
            for (int e = 0; e < count; ++e) {
                NoiseEvent ev;
                ev.gain = rng.uniform(5.0, 10.0);
                const auto kind = rng.bits() % 3;
                if (kind == 0) {
                    ev = {NoiseTarget::nm(), 0.0, rng.uniform(0.25, 1.0), ev.gain, NoiseKind::Burst};
                } else if (kind == 1) {
                    ev = {NoiseTarget::all_hm(), 0.0, rng.uniform(2.5, 4.0), ev.gain, NoiseKind::Burst};
                } else {
                    ev = {NoiseTarget::hm(1 + static_cast<int>(rng.bits() % 4)), 0.0, rng.uniform(2.5, 5.0), ev.gain,
                          NoiseKind::Friction};
                }
                ev.onset = rng.uniform(1.0, 59.0 - ev.duration);
                events.push_back(ev);
            }
            const auto inj = inject_noise(rec, events, seed);
            for (const auto* r : {&inj.recording, &rec}) {
                auto& tally = r == &rec ? clean_runs : noisy_runs;
                for (const auto& ch : r->channels()) {
                    const bool nm = ch.kind.kind == MicKind::NM;
                    if (nm && ch.kind.stethoscope != cfg.nm_channel) continue;
                    const double tf = nm ? cfg.frame_len_nm : cfg.frame_len_hm;
                    std::vector<Interval> hits;
                    if (r == &inj.recording)
                        for (const auto& ev : events)
                            if (ev.target.hits(ch.kind, cfg.nm_channel)) hits.push_back(ev.support(fs));
                    tally_channel(tally, flag_noisy_frames(ch.samples, fs, tf, cfg.threshold), hits, r->length(),
                                  frame_samples(fs, tf), static_cast<std::size_t>(cfg.boundary_flag * fs));
                }
            }
        }
        const double recall = static_cast<double>(noisy_runs.recalled) / static_cast<double>(noisy_runs.truth);
        const double ff = static_cast<double>(noisy_runs.false_flags) / static_cast<double>(noisy_runs.clean);
        const double ff_clean = static_cast<double>(clean_runs.false_flags) / static_cast<double>(clean_runs.clean);
        return Outcome{noisy_runs.recalled == noisy_runs.truth && ff <= 0.02 && ff_clean <= 0.02,
                       fmt("recall %zu/%zu = %.4f, false flags %.4f (with events), %.4f (clean recordings)",
                           noisy_runs.recalled, noisy_runs.truth, recall, ff, ff_clean)};
    });

    run("gate scale invariance", [&] {
        std::size_t differ = 0, checked = 0;
        for (std::size_t i = 0; i < signals.size(); ++i) {
            const auto [fs, tf, tau] = params[i];
            const auto base = flag_noisy_frames(signals[i], fs, tf, tau);
            for (double c : {1e-3, 1.0, 1e3}) {
                auto y = signals[i];
                for (double& v : y) v *= c;
                differ += flag_noisy_frames(y, fs, tf, tau) != base;
                ++checked;
            }
        }
        return Outcome{differ == 0, fmt("%zu of %zu scaled signals differ", differ, checked)};
    });

    run("bandpass response (fs 4000)", [&] {
        const double fs = 4000.0;
        const double g25 = probe_gain_db(25.0, fs), g450 = probe_gain_db(450.0, fs);
        const double g2 = probe_gain_db(2.0, fs), g1800 = probe_gain_db(1800.0, fs);
        const bool edges = g25 >= -6.5 && g25 <= -5.5 && g450 >= -6.5 && g450 <= -5.5;
        const bool stop = g2 <= -20.0 && g1800 <= -20.0;
        return Outcome{edges && stop, fmt("25 Hz %.2f dB, 450 Hz %.2f dB, 2 Hz %.1f dB, 1800 Hz %.1f dB", g25, g450,
                                          g2, g1800)};
    });

    run("fragment target arithmetic", [&] {
        const auto t = class_targets(155, 142, 61);
        std::mt19937_64 rng(77);
        std::size_t bad = 0;
        for (int i = 0; i < 1000; ++i) {
            std::vector<std::size_t> len(1 + rng() % 20);
            for (auto& l : len) l = 1 + rng() % 2'000'000;
            const std::size_t f = rng() % 500;
            const auto a = allocate_fragments(len, f);
            bad += std::accumulate(a.begin(), a.end(), std::size_t{0}) != f;
        }
        return Outcome{t.cad == 61 && t.nor == 67 && bad == 0,
                       fmt("class_targets(155,142,61) = (%zu,%zu); %zu/1000 allocations off", t.cad, t.nor, bad)};
    });

    run("MFCC shape and oracle", [&] {
        const MfccConfig cfg;
        const double fs = 4000.0;
        const MfccExtractor ex(cfg, fs);
        std::mt19937_64 rng(99);
        std::vector<FeatureMatrix> chans;
        double worst = 0.0;
        std::size_t rows = 0;
        for (int i = 0; i < 20; ++i) {
            std::vector<double> x;
            if (i % 2 == 0) {
                x = testing::gaussian(rng, 16000, 0.1 + 0.1 * i);
            } else {
                const auto rec = synth_pcg(4000, 10.0, 60.0 + i, static_cast<std::uint64_t>(i));
                const auto& s = rec.channels()[static_cast<std::size_t>(i) % 5].samples;
                x.assign(s.begin() + 8000, s.begin() + 24000);
            }
            const auto got = ex.mfcc(x);
            const auto want = oracle::mfcc(x, fs, cfg);
            rows = got.rows;
            for (std::size_t k = 0; k < got.data.size(); ++k) worst = std::max(worst, std::abs(got.data[k] - want.data[k]));
            if (i < 4) chans.push_back({got, "S", Label::NOR, 0, {ChannelKind(MicKind::HM, i + 1)}});
        }
        const auto fused = fuse_channels(chans);
        return Outcome{rows == 97 && fused.values.cols == 512 && fused.values.rows == 97 && worst <= 1e-9,
                       fmt("T = %zu, fused width %zu, max |diff| vs naive = %.2e", rows, fused.values.cols, worst)};
    });

    run("loss oracles", [&] {
        bool ok = true;
        std::string detail;
        for (const auto& r : oracle::run_loss_checks(100, 4242, 1e-12)) {
            ok = ok && r.pass;
            detail += fmt("%s %.1e; ", r.name.c_str(), r.max_abs_error);
        }
        return Outcome{ok, detail};
    });

    run("metric suite", [&] {
        std::mt19937_64 rng(31);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            ConfusionCounts c{rng() % 100, rng() % 100, rng() % 100, rng() % 100};
            if (i % 7 == 0) c.tp = 0;
            if (i % 11 == 0) c.fp = 0, c.tn = 0;
            if (c.total() == 0) c.tn = 1;
            const auto r = metrics_from_counts(c);
            const auto o = oracle::rates(c.tp, c.tn, c.fp, c.fn);
            for (double d : {r.mcc - o.mcc, r.uar - o.uar, r.f1_pos - o.f1_pos, r.f1_neg - o.f1_neg, r.acc - o.acc})
                worst = std::max(worst, std::abs(d));
        }
        std::size_t vote_errors = 0, cases = 0;
        for (std::size_t n = 1; n <= 10; ++n)
            for (std::size_t bits = 0; bits < (1u << n); ++bits) {
                std::vector<Label> seq;
                for (std::size_t k = 0; k < n; ++k) seq.push_back((bits >> k) & 1 ? Label::CAD : Label::NOR);
                vote_errors += majority_vote({{"s", seq}}).at("s") != oracle::vote(seq);
                ++cases;
            }
        const bool tie = majority_vote({{"s", {Label::CAD, Label::NOR}}}).at("s") == Label::CAD;
        return Outcome{worst <= 1e-12 && vote_errors == 0 && tie,
                       fmt("1000 tables max |diff| %.1e; %zu/%zu vote cases wrong; tie -> CAD %s", worst,
                           vote_errors, cases, tie ? "yes" : "no")};
    });

    run("end-to-end determinism", [&] {
        const auto root = testing::scratch_dir("determinism");
        PipelineConfig cfg;
        cfg.seed = 7;
        cfg.f_base = 8;
        cfg.synth.n_subjects = 10;
        cfg.synth.duration = 30.0;
        for (int runno = 0; runno < 2; ++runno) {
            const auto dir = root / ("run" + std::to_string(runno));
            const int jobs = runno == 0 ? 1 : 3;
            cmd_synth(cfg, dir / "data", jobs);
            cmd_condition(dir / "data" / "manifest.tsv", cfg, dir / "cond", jobs);
            cmd_featurize(dir / "cond", cfg, dir / "feat", jobs);
        }
        std::size_t differ = 0, bytes = 0;
        const auto names = feature_files(root);
        for (const auto& name : names) {
            const auto a = slurp(root / "run0" / "feat" / name), b = slurp(root / "run1" / "feat" / name);
            differ += a != b;
            bytes += a.size();
        }
        return Outcome{differ == 0, fmt("%zu files (%zu bytes), %zu differ; runs used 1 and 3 workers", names.size(),
                                        bytes, differ)};
    });

    std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
