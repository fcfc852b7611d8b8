#pragma once

// Slow, direct reference implementations used to cross-check the library.
// Nothing here shares code with src/: each function is written from the
// defining formula with plain loops.

#include "pcgkit/core.hpp"
#include "pcgkit/features.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pcgkit::oracle {

/// Per-sample noisy mask from frame energies, median of the inner frames and
/// a strict threshold. The trailing partial frame is never set.
std::vector<bool> noisy_mask(std::span<const double> x, std::size_t frame_len, double threshold);

/// Bitwise OR of masks of equal length.
std::vector<bool> mask_or(const std::vector<std::vector<bool>>& masks);

/// Naive DFT power spectrogram, mel filterbank, log and DCT-II, evaluated
/// in long double.
Matrix mfcc(std::span<const double> x, double fs, const MfccConfig& cfg);

double contrastive_loss(const Matrix& z, std::span<const Label> y, double temperature, bool exclude_self = false);
double center_loss(const Matrix& z, std::span<const Label> y, const Matrix& centers);
double cross_entropy(const Matrix& logits, std::span<const Label> y);
double hybrid_loss(const Matrix& z, std::span<const Label> y, const Matrix& logits, const Matrix& centers,
                   double alpha, double beta, double lambda_c, double temperature);

struct Rates {
    double acc, uar, tpr, tnr, f1_pos, f1_neg, mcc;
};
Rates rates(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn);

Label vote(const std::vector<Label>& preds);

/// Stable finite-difference derivative of f at z along every coordinate.
Matrix numeric_gradient(const Matrix& z, double h, const auto& f) {
    Matrix g(z.rows, z.cols);
    Matrix probe = z;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        const double v = z.data[i];
        probe.data[i] = v + h;
        const double up = f(probe);
        probe.data[i] = v - h;
        const double down = f(probe);
        probe.data[i] = v;
        g.data[i] = (up - down) / (2.0 * h);
    }
    return g;
}

struct LossCheckResult {
    std::string name;
    double max_abs_error = 0.0;
    bool pass = false;
};

/// Random-batch comparison of the library objective against this module.
std::vector<LossCheckResult> run_loss_checks(std::size_t batches, std::uint64_t seed, double tolerance = 1e-12);

} // namespace pcgkit::oracle
