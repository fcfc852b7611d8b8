#include "oracles.hpp"

#include "pcgkit/objective.hpp"
#include "pcgkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pcgkit::oracle {

std::vector<bool> noisy_mask(std::span<const double> x, std::size_t frame_len, double threshold) {
    std::vector<bool> mask(x.size(), false);
    const std::size_t frames = x.size() / frame_len;
    if (frames < 3) return mask;
    std::vector<double> energy(frames, 0.0);
    for (std::size_t n = 0; n < frames * frame_len; ++n) energy[n / frame_len] += x[n] * x[n];

    std::vector<double> inner(energy.begin() + 1, energy.end() - 1);
    std::sort(inner.begin(), inner.end());
    const std::size_t m = inner.size();
    const double med = m % 2 == 1 ? inner[m / 2] : (inner[m / 2 - 1] + inner[m / 2]) / 2.0;

    for (std::size_t n = 0; n < frames * frame_len; ++n)
        if (energy[n / frame_len] > threshold * med) mask[n] = true;
    return mask;
}

std::vector<bool> mask_or(const std::vector<std::vector<bool>>& masks) {
    std::vector<bool> out(masks.empty() ? 0 : masks.front().size(), false);
    for (const auto& m : masks)
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m[i]) out[i] = true;
    return out;
}

Matrix mfcc(std::span<const double> x, double fs, const MfccConfig& cfg) {
    using ld = long double;
    const ld pi = std::numbers::pi_v<long double>;
    const std::size_t N = cfg.win_len;
    const std::size_t bins = N / 2 + 1;
    const std::size_t frames = x.size() < N ? 0 : 1 + (x.size() - N) / cfg.hop;

    std::vector<ld> cos_t(N), sin_t(N), window(N);
    for (std::size_t i = 0; i < N; ++i) {
        cos_t[i] = std::cos(2 * pi * static_cast<ld>(i) / static_cast<ld>(N));
        sin_t[i] = std::sin(2 * pi * static_cast<ld>(i) / static_cast<ld>(N));
        window[i] = (1 - cos_t[i]) / 2;
    }

    auto mel = [](ld hz) { return 2595.0L * std::log10(1.0L + hz / 700.0L); };
    auto hz = [](ld m) { return 700.0L * (std::pow(10.0L, m / 2595.0L) - 1.0L); };
    const ld mlo = mel(cfg.f_min), mhi = mel(cfg.f_max);
    std::vector<ld> pts(cfg.n_mels + 2);
    for (std::size_t j = 0; j < pts.size(); ++j)
        pts[j] = hz(mlo + (mhi - mlo) * static_cast<ld>(j) / static_cast<ld>(cfg.n_mels + 1));
    std::vector<std::vector<ld>> fb(cfg.n_mels, std::vector<ld>(bins, 0));
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        bool any = false;
        for (std::size_t k = 0; k < bins; ++k) {
            const ld f = static_cast<ld>(k) * static_cast<ld>(fs) / static_cast<ld>(N);
            ld w = 0;
            if (f > pts[m] && f <= pts[m + 1]) w = (f - pts[m]) / (pts[m + 1] - pts[m]);
            else if (f > pts[m + 1] && f < pts[m + 2]) w = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
            fb[m][k] = w;
            if (w > 0) any = true;
        }
        if (!any) {
            std::size_t best = 0;
            ld dist = 1e300L;
            for (std::size_t k = 0; k < bins; ++k) {
                const ld d = std::fabs(static_cast<ld>(k) * static_cast<ld>(fs) / static_cast<ld>(N) - pts[m + 1]);
                if (d < dist) dist = d, best = k;
            }
            fb[m][best] = 1;
        }
    }

    Matrix out(frames, cfg.n_mfcc);
    std::vector<ld> power(bins), logmel(cfg.n_mels);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < bins; ++k) {
            ld re = 0, im = 0;
            for (std::size_t n = 0; n < N; ++n) {
                const ld v = static_cast<ld>(x[t * cfg.hop + n]) * window[n];
                const std::size_t idx = (k * n) % N;
                re += v * cos_t[idx];
                im -= v * sin_t[idx];
            }
            power[k] = re * re + im * im;
        }
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            ld e = 0;
            for (std::size_t k = 0; k < bins; ++k) e += fb[m][k] * power[k];
            logmel[m] = std::log(std::max<ld>(e, cfg.log_floor));
        }
        const ld M = static_cast<ld>(cfg.n_mels);
        for (std::size_t c = 0; c < cfg.n_mfcc; ++c) {
            ld acc = 0;
            for (std::size_t m = 0; m < cfg.n_mels; ++m)
                acc += logmel[m] * std::cos(pi * static_cast<ld>(c) * (2 * static_cast<ld>(m) + 1) / (2 * M));
            out(t, c) = static_cast<double>(acc * std::sqrt((c == 0 ? 1.0L : 2.0L) / M));
        }
    }
    return out;
}

double contrastive_loss(const Matrix& z, std::span<const Label> y, double temperature, bool exclude_self) {
    const std::size_t n = z.rows;
    std::vector<double> norm(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < z.cols; ++c) norm[i] += z(i, c) * z(i, c);
        norm[i] = std::sqrt(norm[i]);
    }
    auto sim = [&](std::size_t i, std::size_t j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < z.cols; ++c) dot += z(i, c) * z(j, c);
        return dot / (norm[i] * norm[j]);
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            if (!(exclude_self && k == i)) denom += std::exp(sim(i, k) / temperature);
        double sum = 0.0;
        std::size_t positives = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || y[j] != y[i]) continue;
            sum += std::log(std::exp(sim(i, j) / temperature) / denom);
            ++positives;
        }
        total += sum / static_cast<double>(positives);
    }
    return -total / static_cast<double>(n);
}

double center_loss(const Matrix& z, std::span<const Label> y, const Matrix& centers) {
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const std::size_t c = y[i] == Label::CAD ? 1 : 0;
        for (std::size_t k = 0; k < z.cols; ++k) total += (z(i, k) - centers(c, k)) * (z(i, k) - centers(c, k));
    }
    return total / static_cast<double>(z.rows);
}

double cross_entropy(const Matrix& logits, std::span<const Label> y) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double p0 = std::exp(logits(i, 0)), p1 = std::exp(logits(i, 1));
        const double p_true = (y[i] == Label::CAD ? p1 : p0) / (p0 + p1);
        total -= std::log(p_true);
    }
    return total / static_cast<double>(logits.rows);
}

double hybrid_loss(const Matrix& z, std::span<const Label> y, const Matrix& logits, const Matrix& centers,
                   double alpha, double beta, double lambda_c, double temperature) {
    return beta * oracle::contrastive_loss(z, y, temperature) + alpha * oracle::cross_entropy(logits, y) +
           lambda_c * oracle::center_loss(z, y, centers);
}

Rates rates(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
    const double TP = static_cast<double>(tp), TN = static_cast<double>(tn);
    const double FP = static_cast<double>(fp), FN = static_cast<double>(fn);
    auto frac = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
    Rates r{};
    r.acc = frac(TP + TN, TP + TN + FP + FN);
    r.tpr = frac(TP, TP + FN);
    r.tnr = frac(TN, TN + FP);
    r.uar = (r.tpr + r.tnr) / 2.0;
    const double precision = frac(TP, TP + FP), npv = frac(TN, TN + FN);
    r.f1_pos = frac(2.0 * precision * r.tpr, precision + r.tpr);
    r.f1_neg = frac(2.0 * npv * r.tnr, npv + r.tnr);
    const double d = (TP + FP) * (TP + FN) * (TN + FP) * (TN + FN);
    r.mcc = d == 0.0 ? 0.0 : (TP * TN - FP * FN) / std::sqrt(d);
    return r;
}

Label vote(const std::vector<Label>& preds) {
    std::size_t cad = 0;
    for (Label l : preds) cad += l == Label::CAD;
    return 2 * cad >= preds.size() ? Label::CAD : Label::NOR;
}

std::vector<LossCheckResult> run_loss_checks(std::size_t batches, std::uint64_t seed, double tolerance) {
    std::vector<LossCheckResult> out{{"supervised_contrastive_loss"}, {"center_loss"}, {"cross_entropy"},
                                     {"hybrid_loss"}, {"identical_embeddings_log_n"}};
    SynthRng rng(seed);
    const LossWeights w;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t n = 4 + rng.bits() % 61;
        const std::size_t d = 2 + rng.bits() % 31;
        Matrix z(n, d), logits(n, 2), centers(2, d);
        for (double& v : z.data) v = rng.normal();
        for (double& v : logits.data) v = 3.0 * rng.normal();
        for (double& v : centers.data) v = rng.normal();
        std::vector<Label> y(n);
        // Two of each class guarantees every anchor has a positive.
        for (std::size_t i = 0; i < n; ++i) y[i] = i < 2 ? Label::CAD : i < 4 ? Label::NOR : (rng.bits() & 1 ? Label::CAD : Label::NOR);
        const double tau = rng.uniform(0.1, 2.0);

        auto note = [&](std::size_t k, double got, double want) {
            out[k].max_abs_error = std::max(out[k].max_abs_error, std::fabs(got - want));
        };
        note(0, supervised_contrastive_loss(z, y, tau), oracle::contrastive_loss(z, y, tau));
        note(1, pcgkit::center_loss(z, y, centers), oracle::center_loss(z, y, centers));
        note(2, pcgkit::cross_entropy(logits, y), oracle::cross_entropy(logits, y));
        LossWeights wt = w;
        wt.temperature = tau;
        note(3, pcgkit::hybrid_loss(z, y, logits, centers, wt).total,
             oracle::hybrid_loss(z, y, logits, centers, w.alpha, w.beta, w.lambda_c, tau));

        Matrix same(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) same(i, c) = z(0, c);
        const std::vector<Label> one_class(n, Label::CAD);
        note(4, supervised_contrastive_loss(same, one_class, tau), std::log(static_cast<double>(n)));
    }
    for (auto& r : out) r.pass = r.max_abs_error <= tolerance;
    return out;
}

} // namespace pcgkit::oracle
