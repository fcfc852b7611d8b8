#include "pcgkit/features.hpp"

#include "pcgkit/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

namespace pcgkit {

void MfccConfig::validate(double fs) const {
    if (win_len < 2 || hop == 0 || hop > win_len) throw ConfigError("MFCC needs 0 < hop <= win_len and win_len >= 2");
    if (n_mels == 0 || n_mfcc == 0 || n_mfcc > n_mels) throw ConfigError("MFCC needs 0 < n_mfcc <= n_mels");
    if (!(f_min >= 0) || !(f_min < f_max)) throw ConfigError("MFCC band needs 0 <= f_min < f_max");
    if (f_max > fs / 2) throw ConfigError("MFCC f_max above Nyquist");
    if (!(log_floor > 0)) throw ConfigError("MFCC log floor must be positive");
}

std::string MfccConfig::canonical() const {
    std::ostringstream s;
    s.precision(17);
    s << "mfcc:n_mfcc=" << n_mfcc << ";n_mels=" << n_mels << ";f_min=" << f_min << ";f_max=" << f_max
      << ";win_len=" << win_len << ";hop=" << hop << ";log_floor=" << log_floor << ";window=hann;dct=ortho;mel=htk";
    return s.str();
}

std::size_t frame_count(std::size_t n_samples, std::size_t win_len, std::size_t hop) {
    if (n_samples < win_len) return 0;
    return 1 + (n_samples - win_len) / hop;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

Matrix dct2_matrix(std::size_t n_out, std::size_t n_in) {
    Matrix d(n_out, n_in);
    const double n = static_cast<double>(n_in);
    for (std::size_t k = 0; k < n_out; ++k) {
        const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (std::size_t i = 0; i < n_in; ++i)
            d(k, i) = s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
    return d;
}

Matrix mel_filterbank(const MfccConfig& cfg, double fs) {
    cfg.validate(fs);
    const std::size_t n_bins = cfg.win_len / 2 + 1;
    const double lo_mel = hz_to_mel(cfg.f_min);
    const double hi_mel = hz_to_mel(cfg.f_max);
    std::vector<double> edges(cfg.n_mels + 2);
    for (std::size_t j = 0; j < edges.size(); ++j)
        edges[j] = mel_to_hz(lo_mel + (hi_mel - lo_mel) * static_cast<double>(j) / static_cast<double>(cfg.n_mels + 1));

    const double bin_hz = fs / static_cast<double>(cfg.win_len);
    Matrix fb(cfg.n_mels, n_bins);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
        bool any = false;
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            const double w = std::max(0.0, std::min((f - lo) / (centre - lo), (hi - f) / (hi - centre)));
            fb(m, k) = w;
            any = any || w > 0.0;
        }
        if (!any) {
            const auto k = static_cast<std::size_t>(std::llround(centre / bin_hz));
            fb(m, std::min(k, n_bins - 1)) = 1.0;
        }
    }
    return fb;
}

// FFTW's planner is not thread-safe; execution with new-array calls is.
namespace {
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

struct MfccExtractor::Plan {
    fftw_plan plan = nullptr;
    std::size_t n = 0;
};

MfccExtractor::MfccExtractor(const MfccConfig& cfg, double fs)
    : cfg_(cfg), fs_(fs), window_(hann_window(cfg.win_len)), mel_(mel_filterbank(cfg, fs)),
      dct_(dct2_matrix(cfg.n_mfcc, cfg.n_mels)), plan_(std::make_unique<Plan>()) {
    plan_->n = cfg.win_len;
    const std::size_t n_bins = cfg.win_len / 2 + 1;
    std::lock_guard lock(fftw_planner_mutex());
    auto* in = fftw_alloc_real(cfg.win_len);
    auto* out = fftw_alloc_complex(n_bins);
    plan_->plan = fftw_plan_dft_r2c_1d(static_cast<int>(cfg.win_len), in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (plan_->plan == nullptr) throw InvariantError("FFTW planning failed");
}

MfccExtractor::~MfccExtractor() {
    if (plan_ && plan_->plan) {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_->plan);
    }
}

Matrix MfccExtractor::stft_power(std::span<const double> x) const {
    const std::size_t win = cfg_.win_len;
    if (x.size() < win)
        throw DegenerateInputError("signal of " + std::to_string(x.size()) + " samples is shorter than one STFT window");
    const std::size_t frames = frame_count(x.size(), win, cfg_.hop);
    const std::size_t n_bins = win / 2 + 1;
    Matrix power(frames, n_bins);
    std::vector<double> buf(win);
    std::vector<std::complex<double>> spec(n_bins);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto frame = x.subspan(t * cfg_.hop, win);
        for (std::size_t i = 0; i < win; ++i) buf[i] = frame[i] * window_[i];
        fftw_execute_dft_r2c(plan_->plan, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
        auto row = power.row(t);
        for (std::size_t k = 0; k < n_bins; ++k) row[k] = std::norm(spec[k]);
    }
    return power;
}

Matrix MfccExtractor::mfcc(std::span<const double> x) const {
    const Matrix power = stft_power(x);
    Matrix out(power.rows, cfg_.n_mfcc);
    std::vector<double> logmel(cfg_.n_mels);
    for (std::size_t t = 0; t < power.rows; ++t) {
        const auto p = power.row(t);
        for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
            const auto w = mel_.row(m);
            double e = 0.0;
            for (std::size_t k = 0; k < w.size(); ++k) e += w[k] * p[k];
            logmel[m] = std::log(std::max(e, cfg_.log_floor));
        }
        auto o = out.row(t);
        for (std::size_t c = 0; c < cfg_.n_mfcc; ++c) {
            const auto d = dct_.row(c);
            double acc = 0.0;
            for (std::size_t m = 0; m < cfg_.n_mels; ++m) acc += d[m] * logmel[m];
            o[c] = acc;
        }
    }
    return out;
}

Matrix stft_power(std::span<const double> x, const MfccConfig& cfg) {
    // Any fs above 2*f_max works: the STFT itself does not depend on fs.
    return MfccExtractor(cfg, 2.0 * cfg.f_max).stft_power(x);
}

Matrix mfcc(std::span<const double> x, double fs, const MfccConfig& cfg) { return MfccExtractor(cfg, fs).mfcc(x); }

FeatureMatrix fuse_channels(std::span<const FeatureMatrix> mats) {
    if (mats.empty()) throw DataError("fuse_channels: no channels");
    const std::size_t frames = mats.front().values.rows;
    std::size_t dims = 0;
    for (const auto& m : mats) {
        if (m.values.rows != frames) throw IncompatibleError("fuse_channels: frame counts differ");
        dims += m.values.cols;
    }
    FeatureMatrix fused;
    fused.subject_id = mats.front().subject_id;
    fused.label = mats.front().label;
    fused.start = mats.front().start;
    fused.values = Matrix(frames, dims);
    for (std::size_t t = 0; t < frames; ++t) {
        auto dst = fused.values.row(t).begin();
        for (const auto& m : mats) dst = std::ranges::copy(m.values.row(t), dst).out;
    }
    for (const auto& m : mats) fused.channels.insert(fused.channels.end(), m.channels.begin(), m.channels.end());
    return fused;
}

void Standardizer::Accumulator::add(const Matrix& m) {
    if (n_ == 0 && sum_.empty()) {
        sum_.assign(m.cols, 0.0);
        sq_.assign(m.cols, 0.0);
    }
    if (m.cols != sum_.size()) throw IncompatibleError("Standardizer: feature widths differ");
    for (std::size_t t = 0; t < m.rows; ++t) {
        const auto r = m.row(t);
        for (std::size_t c = 0; c < r.size(); ++c) {
            sum_[c] += r[c];
            sq_[c] += r[c] * r[c];
        }
    }
    n_ += m.rows;
}

Standardizer Standardizer::Accumulator::finish() const {
    if (n_ == 0) throw DataError("Standardizer: no frames");
    Standardizer s;
    s.mean.resize(sum_.size());
    s.stddev.resize(sum_.size());
    for (std::size_t c = 0; c < sum_.size(); ++c) {
        s.mean[c] = sum_[c] / static_cast<double>(n_);
        const double var = std::max(0.0, sq_[c] / static_cast<double>(n_) - s.mean[c] * s.mean[c]);
        s.stddev[c] = var > 0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Standardizer Standardizer::fit(std::span<const FeatureMatrix> mats) {
    Accumulator acc;
    for (const auto& fm : mats) acc.add(fm.values);
    return acc.finish();
}

void Standardizer::apply(Matrix& m) const {
    if (m.cols != mean.size()) throw IncompatibleError("Standardizer::apply: width mismatch");
    for (std::size_t t = 0; t < m.rows; ++t) {
        auto r = m.row(t);
        for (std::size_t c = 0; c < m.cols; ++c) r[c] = (r[c] - mean[c]) / stddev[c];
    }
}

void Standardizer::write(std::ostream& out) const {
    const auto old = out.precision(17);
    out << "# pcgkit standardizer v1\ncolumns " << mean.size() << '\n';
    for (std::size_t c = 0; c < mean.size(); ++c) out << mean[c] << ' ' << stddev[c] << '\n';
    out.precision(old);
}

Standardizer Standardizer::read(std::istream& in) {
    std::string line;
    std::size_t cols = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key >> cols) || key != "columns") throw FormatError("standardizer file lacks 'columns'");
        break;
    }
    Standardizer s;
    s.mean.resize(cols);
    s.stddev.resize(cols);
    for (std::size_t c = 0; c < cols; ++c)
        if (!(in >> s.mean[c] >> s.stddev[c])) throw FormatError("standardizer file truncated");
    return s;
}

// ---------------------------------------------------------------------------

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

FeatureIndexEntry write_feature_record(std::ostream& out, const FeatureMatrix& fm, int fs,
                                       const std::string& config_hash) {
    FeatureIndexEntry e;
    e.record_offset = static_cast<std::uint64_t>(out.tellp());
    e.subject_id = fm.subject_id;
    e.label = fm.label;
    e.start = fm.start;
    e.frames = fm.values.rows;
    e.dims = fm.values.cols;
    std::ostringstream header;
    header << "PCGF1 subject=" << fm.subject_id << " label=" << to_string(fm.label) << " start=" << fm.start
           << " T=" << e.frames << " F=" << e.dims << " fs=" << fs << " config=" << config_hash << '\n';
    const auto h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    e.data_offset = e.record_offset + h.size();
    std::string bytes(fm.values.data.size() * 4, '\0');
    for (std::size_t i = 0; i < fm.values.data.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(fm.values.data[i]));
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing feature record");
    return e;
}

void write_feature_index(std::ostream& out, std::span<const FeatureIndexEntry> entries, const std::string& split,
                         const std::string& config_hash) {
    out << "# pcgkit feature index v1 split=" << split << " config=" << config_hash << " records=" << entries.size()
        << '\n';
    for (const auto& e : entries)
        out << e.record_offset << ' ' << e.data_offset << ' ' << e.subject_id << ' ' << to_string(e.label) << ' '
            << e.start << ' ' << e.frames << ' ' << e.dims << '\n';
}

std::vector<FeatureIndexEntry> read_feature_index(std::istream& in) {
    std::vector<FeatureIndexEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        FeatureIndexEntry e;
        std::string label;
        if (!(ls >> e.record_offset >> e.data_offset >> e.subject_id >> label >> e.start >> e.frames >> e.dims))
            throw FormatError("bad feature index line '" + line + "'");
        e.label = parse_label(label);
        out.push_back(std::move(e));
    }
    return out;
}

FeatureRecord read_feature_record(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw FormatError("missing feature record header");
    std::istringstream hs(header);
    std::string magic, field;
    hs >> magic;
    if (magic != "PCGF1") throw FormatError("bad feature record magic '" + magic + "'");
    FeatureRecord rec;
    std::size_t frames = 0, dims = 0;
    while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw FormatError("bad feature header field '" + field + "'");
        const auto key = field.substr(0, eq);
        const auto val = field.substr(eq + 1);
        if (key == "subject") rec.features.subject_id = val;
        else if (key == "label") rec.features.label = parse_label(val);
        else if (key == "start") rec.features.start = std::stoull(val);
        else if (key == "T") frames = std::stoull(val);
        else if (key == "F") dims = std::stoull(val);
        else if (key == "fs") rec.fs = std::stoi(val);
        else if (key == "config") rec.config_hash = val;
    }
    std::string bytes(frames * dims * 4, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw FormatError("feature record truncated");
    rec.features.values = Matrix(frames, dims);
    for (std::size_t i = 0; i < frames * dims; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
        rec.features.values.data[i] = std::bit_cast<float>(u);
    }
    return rec;
}

} // namespace pcgkit
