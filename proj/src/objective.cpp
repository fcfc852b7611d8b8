#include "pcgkit/objective.hpp"

#include "pcgkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace pcgkit {

namespace {

std::size_t class_index(Label l) { return l == Label::CAD ? 1 : 0; }

void check_labels(const Matrix& m, std::span<const Label> y, const char* what) {
    if (m.rows != y.size()) throw IncompatibleError(std::string(what) + ": row count does not match label count");
}

/// Rows scaled to unit length, plus the original norms.
std::pair<Matrix, std::vector<double>> normalize_rows(const Matrix& z) {
    Matrix u = z;
    std::vector<double> norms(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        auto r = u.row(i);
        double sq = 0.0;
        for (double v : r) sq += v * v;
        const double n = std::sqrt(sq);
        if (!(n > 0.0)) throw DegenerateInputError("zero-norm embedding row " + std::to_string(i));
        for (double& v : r) v /= n;
        norms[i] = n;
    }
    return {std::move(u), std::move(norms)};
}

Matrix gram(const Matrix& u) {
    Matrix s(u.rows, u.rows);
    for (std::size_t i = 0; i < u.rows; ++i)
        for (std::size_t j = i; j < u.rows; ++j) {
            double acc = 0.0;
            const auto a = u.row(i);
            const auto b = u.row(j);
            for (std::size_t k = 0; k < u.cols; ++k) acc += a[k] * b[k];
            s(i, j) = acc;
            s(j, i) = acc;
        }
    for (std::size_t i = 0; i < u.rows; ++i) s(i, i) = 1.0;
    return s;
}

// Log-softmax of row i of S/tau over the denominator set.
std::vector<double> row_log_softmax(const Matrix& s, std::size_t i, double tau, bool exclude_self) {
    const std::size_t n = s.cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
        if (!(exclude_self && k == i)) mx = std::max(mx, s(i, k) / tau);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (!(exclude_self && k == i)) acc += std::exp(s(i, k) / tau - mx);
    const double lse = mx + std::log(acc);
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = s(i, k) / tau - lse;
    return out;
}

std::vector<std::size_t> positive_counts(std::span<const Label> y) {
    std::vector<std::size_t> counts(y.size());
    std::size_t n_cad = static_cast<std::size_t>(std::ranges::count(y, Label::CAD));
    for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t same = y[i] == Label::CAD ? n_cad : y.size() - n_cad;
        counts[i] = same - 1;
        if (counts[i] == 0)
            throw ContractError("sample " + std::to_string(i) + " has no positive partner in the batch");
    }
    return counts;
}

} // namespace

Matrix cosine_similarity_matrix(const Matrix& z) { return gram(normalize_rows(z).first); }

double supervised_contrastive_loss(const Matrix& z, std::span<const Label> y, double temperature,
                                   ContrastiveOptions opts) {
    check_labels(z, y, "supervised_contrastive_loss");
    if (!(temperature > 0)) throw ConfigError("temperature must be positive");
    if (z.rows < 2) throw ContractError("contrastive batch needs at least two samples");
    const auto pos = positive_counts(y);
    const Matrix s = cosine_similarity_matrix(z);
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto logp = row_log_softmax(s, i, temperature, opts.exclude_self);
        double acc = 0.0;
        for (std::size_t j = 0; j < z.rows; ++j)
            if (j != i && y[j] == y[i]) acc += logp[j];
        total += acc / static_cast<double>(pos[i]);
    }
    return -total / static_cast<double>(z.rows);
}

double center_loss(const Matrix& z, std::span<const Label> y, const Matrix& centers) {
    check_labels(z, y, "center_loss");
    if (centers.rows != 2 || centers.cols != z.cols) throw IncompatibleError("center_loss: centers must be 2 x d");
    if (z.rows == 0) throw DataError("center_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto c = centers.row(class_index(y[i]));
        const auto r = z.row(i);
        for (std::size_t k = 0; k < z.cols; ++k) total += (r[k] - c[k]) * (r[k] - c[k]);
    }
    return total / static_cast<double>(z.rows);
}

double cross_entropy(const Matrix& logits, std::span<const Label> y) {
    check_labels(logits, y, "cross_entropy");
    if (logits.cols != 2) throw IncompatibleError("cross_entropy: logits must have two columns");
    if (logits.rows == 0) throw DataError("cross_entropy: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double a = logits(i, 0), b = logits(i, 1);
        const double mx = std::max(a, b);
        const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
        total += lse - logits(i, class_index(y[i]));
    }
    return total / static_cast<double>(logits.rows);
}

HybridLoss hybrid_loss(const Matrix& z, std::span<const Label> y, const Matrix& logits, const Matrix& centers,
                       const LossWeights& w, ContrastiveOptions opts) {
    HybridLoss out;
    out.contrastive = supervised_contrastive_loss(z, y, w.temperature, opts);
    out.cross_entropy = cross_entropy(logits, y);
    out.center = center_loss(z, y, centers);
    out.total = w.beta * out.contrastive + w.alpha * out.cross_entropy + w.lambda_c * out.center;
    return out;
}

HybridGradient hybrid_loss_gradient(const Matrix& z, std::span<const Label> y, const Matrix& logits,
                                    const Matrix& centers, const LossWeights& w, ContrastiveOptions opts) {
    check_labels(z, y, "hybrid_loss_gradient");
    check_labels(logits, y, "hybrid_loss_gradient");
    const std::size_t n = z.rows, d = z.cols;
    const double tau = w.temperature;
    const auto pos = positive_counts(y);
    auto [u, norms] = normalize_rows(z);
    const Matrix s = gram(u);

    // G = dL_contr/dS, treating every entry of S as independent.
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto logp = row_log_softmax(s, i, tau, opts.exclude_self);
        for (std::size_t k = 0; k < n; ++k) {
            double v = 0.0;
            if (!(opts.exclude_self && k == i)) v += std::exp(logp[k]);
            if (k != i && y[k] == y[i]) v -= 1.0 / static_cast<double>(pos[i]);
            g(i, k) = w.beta * v / (tau * static_cast<double>(n));
        }
    }

    HybridGradient grad{Matrix(n, d), Matrix(n, 2), Matrix(2, d)};
    for (std::size_t i = 0; i < n; ++i) {
        // dL/du_i = sum_j (G_ij + G_ji) u_j, projected onto the tangent of the unit sphere.
        std::vector<double> du(d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double c = g(i, j) + g(j, i);
            const auto uj = u.row(j);
            for (std::size_t k = 0; k < d; ++k) du[k] += c * uj[k];
        }
        const auto ui = u.row(i);
        double radial = 0.0;
        for (std::size_t k = 0; k < d; ++k) radial += ui[k] * du[k];
        const auto ci = centers.row(class_index(y[i]));
        const auto zi = z.row(i);
        auto out = grad.embeddings.row(i);
        auto dc = grad.centers.row(class_index(y[i]));
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = zi[k] - ci[k];
            out[k] = (du[k] - radial * ui[k]) / norms[i] + w.lambda_c * 2.0 * diff / static_cast<double>(n);
            dc[k] -= w.lambda_c * 2.0 * diff / static_cast<double>(n);
        }

        const double a = logits(i, 0), b = logits(i, 1);
        const double mx = std::max(a, b);
        const double ea = std::exp(a - mx), eb = std::exp(b - mx);
        const double p1 = eb / (ea + eb);
        const double t1 = y[i] == Label::CAD ? 1.0 : 0.0;
        grad.logits(i, 1) = w.alpha * (p1 - t1) / static_cast<double>(n);
        grad.logits(i, 0) = -grad.logits(i, 1);
    }
    return grad;
}

// ---------------------------------------------------------------------------

ConfusionCounts confusion_counts(std::span<const Label> pred, std::span<const Label> truth) {
    if (pred.size() != truth.size()) throw IncompatibleError("prediction and truth lengths differ");
    if (pred.empty()) throw DataError("no predictions to evaluate");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == Label::CAD, t = truth[i] == Label::CAD;
        if (p && t) ++c.tp;
        else if (!p && !t) ++c.tn;
        else if (p) ++c.fp;
        else ++c.fn;
    }
    return c;
}

EvalReport metrics_from_counts(const ConfusionCounts& c, EvalLevel level) {
    if (c.total() == 0) throw DataError("empty confusion table");
    auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    EvalReport r;
    r.level = level;
    r.counts = c;
    r.acc = (tp + tn) / static_cast<double>(c.total());
    r.tpr = ratio(tp, tp + fn);
    r.tnr = ratio(tn, tn + fp);
    r.uar = 0.5 * (r.tpr + r.tnr);
    r.f1_pos = ratio(2 * tp, 2 * tp + fp + fn);
    r.f1_neg = ratio(2 * tn, 2 * tn + fn + fp);
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    r.mcc = den > 0 ? (tp * tn - fp * fn) / std::sqrt(den) : 0.0;
    return r;
}

EvalReport confusion_metrics(std::span<const Label> pred, std::span<const Label> truth, EvalLevel level) {
    return metrics_from_counts(confusion_counts(pred, truth), level);
}

std::map<std::string, Label> majority_vote(const std::map<std::string, std::vector<Label>>& fragment_preds) {
    if (fragment_preds.empty()) throw DataError("majority_vote: no subjects");
    std::map<std::string, Label> out;
    for (const auto& [subject, preds] : fragment_preds) {
        if (preds.empty()) throw DataError("majority_vote: subject '" + subject + "' has no predictions");
        const auto cad = static_cast<std::size_t>(std::ranges::count(preds, Label::CAD));
        out[subject] = 2 * cad >= preds.size() ? Label::CAD : Label::NOR;
    }
    return out;
}

double selection_score(double train_mcc, double val_mcc) { return 0.9 * val_mcc + 0.1 * train_mcc; }

void write_report(std::ostream& out, const EvalReport& r) {
    const auto old = out.precision(10);
    out << "level " << (r.level == EvalLevel::Fragment ? "fragment" : "subject") << '\n'
        << "TP " << r.counts.tp << "\nTN " << r.counts.tn << "\nFP " << r.counts.fp << "\nFN " << r.counts.fn << '\n'
        << "Acc " << r.acc << "\nUAR " << r.uar << "\nTPR " << r.tpr << "\nTNR " << r.tnr << '\n'
        << "F1+ " << r.f1_pos << "\nF1- " << r.f1_neg << "\nMCC " << r.mcc << '\n';
    out.precision(old);
}

} // namespace pcgkit
