#include "oracles.hpp"
#include "pcgkit/errors.hpp"
#include "pcgkit/objective.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace pcgkit;

namespace {

struct Batch {
    Matrix z, logits, centers;
    std::vector<Label> y;
};

Batch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    std::normal_distribution<double> g;
    Batch b{Matrix(n, d), Matrix(n, 2), Matrix(2, d), std::vector<Label>(n)};
    for (double& v : b.z.data) v = g(rng);
    for (double& v : b.logits.data) v = 2.0 * g(rng);
    for (double& v : b.centers.data) v = g(rng);
    for (std::size_t i = 0; i < n; ++i) b.y[i] = i % 2 ? Label::CAD : Label::NOR;
    std::shuffle(b.y.begin(), b.y.end(), rng);
    return b;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        scale = std::max(scale, std::abs(b.data[i]));
        diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
    }
    return diff / std::max(scale, 1e-12);
}

} // namespace

TEST_CASE("cosine similarity") {
    Matrix eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 2.0 + static_cast<double>(i);
    Matrix want(3, 3);
    for (std::size_t i = 0; i < 3; ++i) want(i, i) = 1.0;
    CHECK(cosine_similarity_matrix(eye) == want);

    Matrix same(4, 3);
    for (std::size_t i = 0; i < 4; ++i) same(i, 0) = 1.0, same(i, 1) = -2.0, same(i, 2) = 0.5;
    for (double v : cosine_similarity_matrix(same).data) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

    std::mt19937_64 rng(1);
    const auto b = random_batch(rng, 17, 9);
    const auto s = cosine_similarity_matrix(b.z);
    for (std::size_t i = 0; i < 17; ++i)
        for (std::size_t j = 0; j < 17; ++j) {
            double dot = 0, ni = 0, nj = 0;
            for (std::size_t c = 0; c < 9; ++c) {
                dot += b.z(i, c) * b.z(j, c);
                ni += b.z(i, c) * b.z(i, c);
                nj += b.z(j, c) * b.z(j, c);
            }
            CHECK(std::abs(s(i, j) - dot / std::sqrt(ni * nj)) <= 1e-12);
            CHECK(s(i, j) == s(j, i));
        }

    Matrix zero_row(2, 3, 1.0);
    zero_row(1, 0) = zero_row(1, 1) = zero_row(1, 2) = 0.0;
    CHECK_THROWS_AS(cosine_similarity_matrix(zero_row), DegenerateInputError);
}

TEST_CASE("supervised contrastive loss") {
    SUBCASE("identical embeddings give log N") {
        for (std::size_t n : {2u, 5u, 64u}) {
            Matrix z(n, 3, 0.25);
            const std::vector<Label> y(n, Label::NOR);
            CHECK(std::abs(supervised_contrastive_loss(z, y, 0.805) - std::log(static_cast<double>(n))) <= 1e-12);
        }
    }
    SUBCASE("two by two with opposite classes") {
        Matrix z(4, 2);
        z(0, 0) = z(1, 0) = 1.0;
        z(2, 0) = z(3, 0) = -1.0;
        const std::vector<Label> y{Label::CAD, Label::CAD, Label::NOR, Label::NOR};
        const double got = supervised_contrastive_loss(z, y, 1.0);
        CHECK(std::abs(got - oracle::contrastive_loss(z, y, 1.0)) <= 1e-12);
        const double e = std::exp(1.0), ei = std::exp(-1.0);
        CHECK(std::abs(got - (-std::log(e / (2 * e + 2 * ei)))) <= 1e-12);
    }
    SUBCASE("random batches against the oracle, both denominator variants") {
        std::mt19937_64 rng(2);
        for (int t = 0; t < 50; ++t) {
            const auto b = random_batch(rng, 4 + rng() % 40, 2 + rng() % 20);
            const double tau = 0.05 + std::uniform_real_distribution<double>(0, 2)(rng);
            CHECK(std::abs(supervised_contrastive_loss(b.z, b.y, tau) - oracle::contrastive_loss(b.z, b.y, tau)) <= 1e-12);
            CHECK(std::abs(supervised_contrastive_loss(b.z, b.y, tau, {true}) -
                           oracle::contrastive_loss(b.z, b.y, tau, true)) <= 1e-12);
        }
    }
    SUBCASE("pushing a cross-class pair apart lowers the loss") {
        Matrix z(4, 2);
        z(0, 0) = 1.0, z(0, 1) = 0.1;
        z(1, 0) = 1.0, z(1, 1) = -0.1;
        z(2, 0) = 0.2, z(2, 1) = 1.0;
        z(3, 0) = -0.3, z(3, 1) = 1.0;
        const std::vector<Label> y{Label::CAD, Label::CAD, Label::NOR, Label::NOR};
        const double before = supervised_contrastive_loss(z, y, 0.5);
        z(2, 0) = -0.2; // node 2 turns away from class CAD
        CHECK(supervised_contrastive_loss(z, y, 0.5) < before);
    }
    SUBCASE("row rescaling does not matter") {
        std::mt19937_64 rng(3);
        auto b = random_batch(rng, 12, 5);
        const double base = supervised_contrastive_loss(b.z, b.y, 0.8);
        for (std::size_t i = 0; i < b.z.rows; ++i)
            for (std::size_t c = 0; c < b.z.cols; ++c) b.z(i, c) *= 0.01 + static_cast<double>(i) * 3.0;
        CHECK(std::abs(supervised_contrastive_loss(b.z, b.y, 0.8) - base) <= 1e-9);
    }
    SUBCASE("contract") {
        Matrix z(3, 2, 1.0);
        const std::vector<Label> lone{Label::CAD, Label::NOR, Label::NOR};
        CHECK_THROWS_AS(supervised_contrastive_loss(z, lone, 1.0), ContractError);
        const std::vector<Label> ok{Label::CAD, Label::CAD, Label::CAD};
        CHECK_THROWS_AS(supervised_contrastive_loss(z, ok, 0.0), ConfigError);
        const std::vector<Label> short_y{Label::CAD, Label::CAD};
        CHECK_THROWS_AS(supervised_contrastive_loss(z, short_y, 1.0), IncompatibleError);
    }
}

TEST_CASE("center loss and cross entropy") {
    Matrix centers(2, 2);
    centers(1, 0) = 1.0;
    Matrix z(2, 2);
    z(0, 0) = 0.0;
    z(1, 0) = 1.0;
    const std::vector<Label> y{Label::NOR, Label::CAD};
    CHECK(center_loss(z, y, centers) == 0.0);
    Matrix single(1, 2);
    single(0, 1) = 2.0;
    const std::vector<Label> nor{Label::NOR};
    CHECK(center_loss(single, nor, centers) == doctest::Approx(4.0));
    CHECK_THROWS_AS(center_loss(single, nor, Matrix(2, 3)), IncompatibleError);

    Matrix even(3, 2, 0.7);
    const std::vector<Label> y3{Label::NOR, Label::CAD, Label::CAD};
    CHECK(std::abs(cross_entropy(even, y3) - std::log(2.0)) <= 1e-15);
    Matrix sure(1, 2);
    sure(0, 1) = 50.0;
    const std::vector<Label> cad{Label::CAD};
    CHECK(cross_entropy(sure, cad) < 1e-20);
    Matrix huge(1, 2);
    huge(0, 0) = 1000.0;
    CHECK(cross_entropy(huge, cad) == doctest::Approx(1000.0)); // stable far from the softmax peak

    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        const auto b = random_batch(rng, 1 + rng() % 64, 1 + rng() % 32);
        CHECK(std::abs(center_loss(b.z, b.y, b.centers) - oracle::center_loss(b.z, b.y, b.centers)) <= 1e-12);
        CHECK(std::abs(cross_entropy(b.logits, b.y) - oracle::cross_entropy(b.logits, b.y)) <= 1e-12);
    }
}

TEST_CASE("hybrid loss") {
    std::mt19937_64 rng(5);
    const auto b = random_batch(rng, 16, 6);
    const LossWeights zero{0.0, 0.0, 0.0, 0.805};
    CHECK(hybrid_loss(b.z, b.y, b.logits, b.centers, zero).total == 0.0);

    const LossWeights w;
    CHECK(w.beta * 1.0 + w.alpha * 1.0 + w.lambda_c * 1.0 == doctest::Approx(1.70701).epsilon(1e-15));

    const auto h = hybrid_loss(b.z, b.y, b.logits, b.centers, w);
    CHECK(std::abs(h.total - (w.beta * h.contrastive + w.alpha * h.cross_entropy + w.lambda_c * h.center)) <= 1e-12);
    CHECK(std::abs(h.total - oracle::hybrid_loss(b.z, b.y, b.logits, b.centers, w.alpha, w.beta, w.lambda_c,
                                                 w.temperature)) <= 1e-12);

    LossWeights twice = w;
    twice.beta *= 2.0;
    const auto h2 = hybrid_loss(b.z, b.y, b.logits, b.centers, twice);
    CHECK(std::abs((h2.total - h.total) - w.beta * h.contrastive) <= 1e-12);
}

TEST_CASE("hybrid gradient matches central differences") {
    std::mt19937_64 rng(6);
    for (bool exclude : {false, true}) {
        for (int t = 0; t < 10; ++t) {
            const auto b = random_batch(rng, 4 + rng() % 10, 2 + rng() % 6);
            LossWeights w;
            w.lambda_c = 0.3; // large enough that the center term is visible
            const ContrastiveOptions opts{exclude};
            const auto g = hybrid_loss_gradient(b.z, b.y, b.logits, b.centers, w, opts);
            const double h = 1e-6;
            const auto dz = oracle::numeric_gradient(b.z, h, [&](const Matrix& z) {
                return hybrid_loss(z, b.y, b.logits, b.centers, w, opts).total;
            });
            const auto dl = oracle::numeric_gradient(b.logits, h, [&](const Matrix& l) {
                return hybrid_loss(b.z, b.y, l, b.centers, w, opts).total;
            });
            const auto dc = oracle::numeric_gradient(b.centers, h, [&](const Matrix& c) {
                return hybrid_loss(b.z, b.y, b.logits, c, w, opts).total;
            });
            CHECK(max_rel_diff(g.embeddings, dz) <= 1e-4);
            CHECK(max_rel_diff(g.logits, dl) <= 1e-4);
            CHECK(max_rel_diff(g.centers, dc) <= 1e-4);
        }
    }
}

TEST_CASE("confusion metrics") {
    using L = Label;
    const std::vector<L> truth{L::CAD, L::CAD, L::NOR, L::NOR};
    const auto perfect = confusion_metrics(truth, truth);
    CHECK(perfect.acc == 1.0);
    CHECK(perfect.uar == 1.0);
    CHECK(perfect.mcc == 1.0);

    const std::vector<L> all_pos(4, L::CAD);
    const auto deg = confusion_metrics(all_pos, truth);
    CHECK(deg.tpr == 1.0);
    CHECK(deg.tnr == 0.0);
    CHECK(deg.uar == 0.5);
    CHECK(deg.mcc == 0.0);

    CHECK_THROWS_AS(confusion_metrics(std::vector<L>{}, std::vector<L>{}), DataError);
    CHECK_THROWS_AS(confusion_metrics(all_pos, std::vector<L>{L::CAD}), IncompatibleError);

    std::mt19937_64 rng(7);
    for (int t = 0; t < 1000; ++t) {
        ConfusionCounts c{rng() % 50, rng() % 50, rng() % 50, rng() % 50};
        if (t % 10 == 0) c.fp = 0, c.tn = 0;
        if (c.total() == 0) continue;
        const auto r = metrics_from_counts(c);
        const auto o = oracle::rates(c.tp, c.tn, c.fp, c.fn);
        CHECK(std::abs(r.acc - o.acc) <= 1e-12);
        CHECK(std::abs(r.uar - o.uar) <= 1e-12);
        CHECK(std::abs(r.tpr - o.tpr) <= 1e-12);
        CHECK(std::abs(r.tnr - o.tnr) <= 1e-12);
        CHECK(std::abs(r.f1_pos - o.f1_pos) <= 1e-12);
        CHECK(std::abs(r.f1_neg - o.f1_neg) <= 1e-12);
        CHECK(std::abs(r.mcc - o.mcc) <= 1e-12);
        CHECK(r.uar == doctest::Approx((r.tpr + r.tnr) / 2));
        CHECK(r.mcc >= -1.0);
        CHECK(r.mcc <= 1.0);
        // Swapping the positive class in both prediction and truth leaves MCC unchanged.
        const auto swapped = metrics_from_counts({c.tn, c.tp, c.fn, c.fp});
        CHECK(std::abs(swapped.mcc - r.mcc) <= 1e-12);
    }
}

TEST_CASE("majority vote") {
    using L = Label;
    const std::map<std::string, std::vector<L>> preds{
        {"a", {L::CAD, L::CAD, L::NOR}}, {"b", {L::NOR}}, {"c", {L::CAD, L::NOR}}, {"d", {L::NOR, L::NOR, L::CAD}}};
    const auto v = majority_vote(preds);
    CHECK(v.at("a") == L::CAD);
    CHECK(v.at("b") == L::NOR);
    CHECK(v.at("c") == L::CAD);
    CHECK(v.at("d") == L::NOR);

    // Every label sequence up to length 8.
    for (std::size_t n = 1; n <= 8; ++n)
        for (std::size_t bits = 0; bits < (1u << n); ++bits) {
            std::vector<L> seq;
            for (std::size_t i = 0; i < n; ++i) seq.push_back((bits >> i) & 1 ? L::CAD : L::NOR);
            CHECK(majority_vote({{"s", seq}}).at("s") == oracle::vote(seq));
        }
    CHECK_THROWS_AS(majority_vote({}), DataError);
    CHECK_THROWS_AS(majority_vote({{"x", {}}}), DataError);
}

TEST_CASE("selection score and report") {
    CHECK(selection_score(1.0, 1.0) == doctest::Approx(1.0));
    CHECK(selection_score(0.0, 1.0) == doctest::Approx(0.9));
    CHECK(selection_score(0.4, 0.6) == doctest::Approx(0.58));

    std::ostringstream out;
    write_report(out, metrics_from_counts({3, 4, 1, 2}, EvalLevel::Subject));
    const auto text = out.str();
    for (const char* key : {"level subject\n", "\nAcc ", "\nUAR ", "\nTPR ", "\nTNR ", "\nF1+ ", "\nF1- ", "\nMCC "})
        CHECK(text.find(key) != std::string::npos);
}
