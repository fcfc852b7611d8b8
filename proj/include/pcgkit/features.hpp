#pragma once

#include "pcgkit/core.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pcgkit {

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct MfccConfig {
    std::size_t n_mfcc = 128;
    std::size_t n_mels = 128;
    double f_min = 25.0;
    double f_max = 450.0;
    std::size_t win_len = 512;
    std::size_t hop = 160;
    double log_floor = 1e-10;

    void validate(double fs) const;
    /// Stable text form, used for hashing.
    std::string canonical() const;
};

/// Frames that fit fully inside `n_samples`: 1 + (n - win) / hop.
std::size_t frame_count(std::size_t n_samples, std::size_t win_len, std::size_t hop);

/// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window.
std::vector<double> hann_window(std::size_t n);

/// Orthonormal DCT-II basis, n_out x n_in.
Matrix dct2_matrix(std::size_t n_out, std::size_t n_in);

/// Triangular mel filters (n_mels x win_len/2+1). Filters narrower than one
/// FFT bin get their nearest bin set to 1.
Matrix mel_filterbank(const MfccConfig& cfg, double fs);

/**
 * Reusable MFCC pipeline for one (config, fs) pair. Thread-safe for
 * concurrent calls once constructed.
 */
class MfccExtractor {
public:
    MfccExtractor(const MfccConfig& cfg, double fs);
    ~MfccExtractor();
    MfccExtractor(const MfccExtractor&) = delete;
    MfccExtractor& operator=(const MfccExtractor&) = delete;

    const MfccConfig& config() const { return cfg_; }
    const Matrix& filterbank() const { return mel_; }

    /// Hann-windowed |FFT|^2, frames x (win_len/2+1). No centring or padding.
    Matrix stft_power(std::span<const double> x) const;
    Matrix mfcc(std::span<const double> x) const;

private:
    struct Plan;
    MfccConfig cfg_;
    double fs_;
    std::vector<double> window_;
    Matrix mel_;
    Matrix dct_;
    std::unique_ptr<Plan> plan_;
};

Matrix stft_power(std::span<const double> x, const MfccConfig& cfg);
Matrix mfcc(std::span<const double> x, double fs, const MfccConfig& cfg);

/// Feature matrix of one fragment with its provenance.
struct FeatureMatrix {
    Matrix values; ///< frames x dims
    std::string subject_id;
    Label label = Label::NOR;
    std::size_t start = 0;
    std::vector<ChannelKind> channels;
};

/// Column-wise concatenation in channel order (early fusion).
FeatureMatrix fuse_channels(std::span<const FeatureMatrix> mats);

/// Per-column mean/std fitted on the training split.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Standardizer fit(std::span<const FeatureMatrix> mats);
    /// Running column sums, so the statistics can be gathered while streaming.
    class Accumulator {
    public:
        void add(const Matrix& m);
        std::size_t frames() const { return n_; }
        /// Population statistics; a constant column gets stddev 1.
        Standardizer finish() const;

    private:
        std::vector<double> sum_, sq_;
        std::size_t n_ = 0;
    };
    void apply(Matrix& m) const;
    void write(std::ostream& out) const;
    static Standardizer read(std::istream& in);
};

// ---------------------------------------------------------------------------
// Feature file format
//
// Each record is a text header line
//   PCGF1 subject=<id> label=<CAD|NOR> start=<n> T=<rows> F=<cols> fs=<Hz> config=<hash>\n
// followed by T*F little-endian float32 values in row-major order. An index
// file lists, per record, `record_offset data_offset subject label start T F`.

struct FeatureIndexEntry {
    std::uint64_t record_offset = 0;
    std::uint64_t data_offset = 0;
    std::string subject_id;
    Label label = Label::NOR;
    std::size_t start = 0;
    std::size_t frames = 0;
    std::size_t dims = 0;
};

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

/// Appends one record; returns its index entry.
FeatureIndexEntry write_feature_record(std::ostream& out, const FeatureMatrix& fm, int fs,
                                       const std::string& config_hash);
void write_feature_index(std::ostream& out, std::span<const FeatureIndexEntry> entries, const std::string& split,
                         const std::string& config_hash);
std::vector<FeatureIndexEntry> read_feature_index(std::istream& in);

struct FeatureRecord {
    FeatureMatrix features; ///< values widened back to double
    int fs = 0;
    std::string config_hash;
};
/// Reads the record starting at the current stream position.
FeatureRecord read_feature_record(std::istream& in);

} // namespace pcgkit
