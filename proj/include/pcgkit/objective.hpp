#pragma once

#include "pcgkit/core.hpp"
#include "pcgkit/features.hpp"

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pcgkit {

/// Loss weights and contrastive temperature (tuned defaults).
struct LossWeights {
    double alpha = 0.7235;     ///< cross-entropy
    double beta = 0.9807;      ///< supervised contrastive
    double lambda_c = 0.00281; ///< center loss
    double temperature = 0.8050;
};

struct ContrastiveOptions {
    /// Drop k == i from the softmax denominator. Off by default: the self
    /// term is part of the denominator.
    bool exclude_self = false;
};

/// Rows L2-normalized, then S = Z Z^T. Throws DegenerateInputError on a zero row.
Matrix cosine_similarity_matrix(const Matrix& z);

/**
 * Supervised contrastive loss over a mini-batch.
 *
 * For anchor i with positives P(i) (same label, j != i):
 *   -1/N sum_i 1/|P(i)| sum_{j in P(i)} log softmax_k(S_ik / tau)[j]
 * Every anchor needs at least one positive (ContractError otherwise).
 */
double supervised_contrastive_loss(const Matrix& z, std::span<const Label> y, double temperature,
                                   ContrastiveOptions opts = {});

/// Mean squared distance to the class centre; `centers` has one row per class (NOR, CAD).
double center_loss(const Matrix& z, std::span<const Label> y, const Matrix& centers);

/// Mean negative log-softmax of the true class; logits are N x 2 (NOR, CAD).
double cross_entropy(const Matrix& logits, std::span<const Label> y);

struct HybridLoss {
    double total = 0.0;
    double contrastive = 0.0;
    double cross_entropy = 0.0;
    double center = 0.0;
};

HybridLoss hybrid_loss(const Matrix& z, std::span<const Label> y, const Matrix& logits, const Matrix& centers,
                       const LossWeights& w, ContrastiveOptions opts = {});

struct HybridGradient {
    Matrix embeddings; ///< dL/dZ
    Matrix logits;     ///< dL/dlogits
    Matrix centers;    ///< dL/dcenters
};

/// Analytic gradient of hybrid_loss.
HybridGradient hybrid_loss_gradient(const Matrix& z, std::span<const Label> y, const Matrix& logits,
                                    const Matrix& centers, const LossWeights& w, ContrastiveOptions opts = {});

// ---------------------------------------------------------------------------
// Metrics

enum class EvalLevel { Fragment, Subject };

struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t total() const { return tp + tn + fp + fn; }
};

struct EvalReport {
    EvalLevel level = EvalLevel::Fragment;
    ConfusionCounts counts;
    double acc = 0, uar = 0, tpr = 0, tnr = 0, f1_pos = 0, f1_neg = 0, mcc = 0;
};

/// CAD is the positive class.
ConfusionCounts confusion_counts(std::span<const Label> pred, std::span<const Label> truth);

/// Rates with an empty denominator are 0; MCC is 0 when any marginal is 0.
EvalReport metrics_from_counts(const ConfusionCounts& c, EvalLevel level = EvalLevel::Fragment);
EvalReport confusion_metrics(std::span<const Label> pred, std::span<const Label> truth,
                             EvalLevel level = EvalLevel::Fragment);

/// Modal label per subject; an exact tie goes to CAD.
std::map<std::string, Label> majority_vote(const std::map<std::string, std::vector<Label>>& fragment_preds);

/// Checkpoint selection: 0.9 * validation MCC + 0.1 * training MCC.
double selection_score(double train_mcc, double val_mcc);

/// `key value` lines using the column names Acc, UAR, TPR, TNR, F1+, F1-, MCC.
void write_report(std::ostream& out, const EvalReport& r);

} // namespace pcgkit
