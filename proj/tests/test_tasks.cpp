#include "dualpath/tasks.hpp"

#include <doctest.h>

#include <cmath>

using namespace dualpath;
using namespace dualpath::tasks;

namespace {

std::vector<std::uint8_t> random_mask(Rng& rng, double density) {
    std::vector<std::uint8_t> m(6 * 2048);
    for (auto& v : m) v = rng.uniform() < density ? 1 : 0;
    return m;
}

// independent counting oracle for a batch of mask pairs
IoUResult oracle_iou(const std::vector<std::vector<std::uint8_t>>& pred,
                     const std::vector<std::vector<std::uint8_t>>& truth) {
    IoUResult r;
    double mean = 0.0;
    for (int c = 0; c < 6; ++c) {
        std::uint64_t inter = 0, uni = 0;
        for (std::size_t w = 0; w < pred.size(); ++w)
            for (int t = 0; t < 2048; ++t) {
                const bool a = pred[w][static_cast<std::size_t>(c * 2048 + t)] != 0;
                const bool b = truth[w][static_cast<std::size_t>(c * 2048 + t)] != 0;
                if (a && b) ++inter;
                if (a || b) ++uni;
            }
        r.per_class[static_cast<std::size_t>(c)] =
            uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        mean += r.per_class[static_cast<std::size_t>(c)];
    }
    r.mean = mean / 6.0;
    return r;
}

}  // namespace

TEST_SUITE("tasks") {

TEST_CASE("bmi thresholds at 18.5 and 24.9, middle class inclusive") {
    CHECK(bmi_class(17.0) == 0);
    CHECK(bmi_class(18.5) == 1);
    CHECK(bmi_class(24.9) == 1);
    CHECK(bmi_class(24.91) == 2);
    CHECK(bmi_class(30.0) == 2);
    CHECK_THROWS_AS(bmi_class(0.0), InputError);
}

TEST_CASE("age cutoffs at 24 and 30, middle class inclusive") {
    CHECK(age_class(23.0) == 0);
    CHECK(age_class(24.0) == 1);
    CHECK(age_class(30.0) == 1);
    CHECK(age_class(31.0) == 2);
    CHECK_THROWS_AS(age_class(-1.0), InputError);
}

TEST_CASE("task metadata") {
    CHECK(task_classes(TaskKind::subject_id) == 30);
    CHECK(task_classes(TaskKind::bmi) == 3);
    CHECK(task_classes(TaskKind::sex) == 2);
    CHECK(task_classes(TaskKind::age) == 3);
    CHECK(task_out_channels(TaskKind::segmentation) == 6);
    CHECK(task_out_channels(TaskKind::bp) == 1);
    CHECK(task_head_kind(TaskKind::bp) == nn::HeadKind::regressor);
    CHECK(task_from_name("segmentation") == TaskKind::segmentation);
    CHECK_THROWS_AS(task_from_name("nope"), ConfigError);
}

TEST_CASE("one-hot labels have exactly one hot entry") {
    auto v = TaskLabels::one_hot(3, 30);
    double sum = 0.0;
    for (double x : v) sum += x;
    CHECK(sum == 1.0);
    CHECK(v[3] == 1.0);
    CHECK_THROWS_AS(TaskLabels::one_hot(30, 30), InputError);
}

TEST_CASE("identical nonempty masks give IoU 1, disjoint give 0") {
    Rng rng(31);
    auto m = random_mask(rng, 0.3);
    auto r = iou({m.data()}, {m.data()});
    for (double v : r.per_class) CHECK(v == 1.0);
    CHECK(r.mean == 1.0);

    std::vector<std::uint8_t> a(6 * 2048, 0), b(6 * 2048, 0);
    for (int c = 0; c < 6; ++c) {
        a[static_cast<std::size_t>(c * 2048)] = 1;
        b[static_cast<std::size_t>(c * 2048 + 1)] = 1;
    }
    auto r2 = iou({a.data()}, {b.data()});
    for (double v : r2.per_class) CHECK(v == 0.0);
}

TEST_CASE("half coverage with no false positives gives IoU 0.5") {
    std::vector<std::uint8_t> truth(6 * 2048, 0), pred(6 * 2048, 0);
    for (int c = 0; c < 6; ++c)
        for (int t = 0; t < 1024; ++t) {
            truth[static_cast<std::size_t>(c * 2048 + t)] = 1;
            if (t < 512) pred[static_cast<std::size_t>(c * 2048 + t)] = 1;
        }
    auto r = iou({pred.data()}, {truth.data()});
    for (double v : r.per_class) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("IoU matches the brute-force counting oracle on random mask pairs") {
    Rng rng(32);
    std::vector<std::vector<std::uint8_t>> pred, truth;
    std::vector<const std::uint8_t*> pp, tp;
    for (int i = 0; i < 25; ++i) {
        pred.push_back(random_mask(rng, 0.2 + 0.5 * rng.uniform()));
        truth.push_back(random_mask(rng, 0.2 + 0.5 * rng.uniform()));
    }
    for (auto& m : pred) pp.push_back(m.data());
    for (auto& m : truth) tp.push_back(m.data());
    auto got = iou(pp, tp);
    auto want = oracle_iou(pred, truth);
    for (int c = 0; c < 6; ++c)
        CHECK(got.per_class[static_cast<std::size_t>(c)] == want.per_class[static_cast<std::size_t>(c)]);
    CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-15));
}

TEST_CASE("IoU is symmetric and invariant to window order") {
    Rng rng(33);
    std::vector<std::vector<std::uint8_t>> a, b;
    for (int i = 0; i < 6; ++i) {
        a.push_back(random_mask(rng, 0.4));
        b.push_back(random_mask(rng, 0.4));
    }
    std::vector<const std::uint8_t*> ap, bp, ar, br;
    for (auto& m : a) ap.push_back(m.data());
    for (auto& m : b) bp.push_back(m.data());
    for (int i = 5; i >= 0; --i) {
        ar.push_back(a[static_cast<std::size_t>(i)].data());
        br.push_back(b[static_cast<std::size_t>(i)].data());
    }
    auto r1 = iou(ap, bp);
    auto r2 = iou(bp, ap);
    auto r3 = iou(ar, br);
    for (int c = 0; c < 6; ++c) {
        CHECK(r1.per_class[static_cast<std::size_t>(c)] == r2.per_class[static_cast<std::size_t>(c)]);
        CHECK(r1.per_class[static_cast<std::size_t>(c)] == r3.per_class[static_cast<std::size_t>(c)]);
    }
}

TEST_CASE("mean IoU equals the arithmetic mean of the six classes") {
    Rng rng(34);
    auto p = random_mask(rng, 0.3);
    auto t = random_mask(rng, 0.3);
    auto r = iou({p.data()}, {t.data()});
    double mean = 0.0;
    for (double v : r.per_class) mean += v;
    mean /= 6.0;
    CHECK(std::fabs(r.mean - mean) < 1e-12);
}

TEST_CASE("both-empty class scores IoU 1") {
    std::vector<std::uint8_t> zero(6 * 2048, 0);
    auto r = iou({zero.data()}, {zero.data()});
    for (double v : r.per_class) CHECK(v == 1.0);
}

TEST_CASE("accuracy counts argmax matches with lowest-index tie breaking") {
    Tensor logits(3, 4, 1);
    // row 0: clear class 2; row 1: tie between 0 and 3 -> argmax 0; row 2: class 1
    logits.at(0, 2, 0) = 5.0;
    logits.at(1, 0, 0) = 2.0;
    logits.at(1, 3, 0) = 2.0;
    logits.at(2, 1, 0) = 1.0;
    CHECK(accuracy(logits, {2, 0, 1}) == doctest::Approx(1.0));
    CHECK(accuracy(logits, {0, 3, 0}) == doctest::Approx(0.0));
    CHECK(accuracy(logits, {2, 3, 0}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("accuracy is permutation invariant over the batch") {
    Rng rng(35);
    Tensor logits(8, 5, 1);
    std::vector<int> labels(8);
    for (int i = 0; i < 8; ++i) {
        for (int k = 0; k < 5; ++k) logits.at(i, k, 0) = rng.normal();
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(5));
    }
    Tensor perm(8, 5, 1);
    std::vector<int> plabels(8);
    for (int i = 0; i < 8; ++i) {
        const int j = 7 - i;
        for (int k = 0; k < 5; ++k) perm.at(i, k, 0) = logits.at(j, k, 0);
        plabels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(j)];
    }
    CHECK(accuracy(logits, labels) == accuracy(perm, plabels));
}

TEST_CASE("MAE: zero at identity, offsets pass through, de-normalization scales by std") {
    Tensor pred(2, 1, 2048), truth(2, 1, 2048);
    CHECK(mae_normalized(pred, truth) == 0.0);
    for (auto& v : pred.v) v = 2.0;
    CHECK(mae_normalized(pred, truth) == doctest::Approx(2.0));
    // constant 2 z-units with stds {1, 3} -> mean of 2 and 6
    CHECK(mae_mmhg(pred, truth, {1.0f, 3.0f}) == doctest::Approx(4.0));

    // single-record case: de-normalized equals normalized x std
    Rng rng(36);
    Tensor p1(1, 1, 2048), t1(1, 1, 2048);
    for (auto& v : p1.v) v = rng.normal();
    for (auto& v : t1.v) v = rng.normal();
    const float std_v = 7.25f;
    CHECK(mae_mmhg(p1, t1, {std_v}) ==
          doctest::Approx(mae_normalized(p1, t1) * static_cast<double>(std_v)).epsilon(1e-12));
}

TEST_CASE("training losses produce gradients that match finite differences") {
    Rng rng(37);
    // softmax cross entropy
    Tensor logits(3, 5, 1);
    for (auto& v : logits.v) v = rng.normal();
    std::vector<int> labels = {1, 4, 0};
    Tensor g;
    const double l0 = softmax_xent(logits, labels, &g);
    CHECK(l0 > 0.0);
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); i += 3) {
        Tensor lp = logits, lm = logits;
        lp.v[i] += h;
        lm.v[i] -= h;
        const double fd = (softmax_xent(lp, labels, nullptr) - softmax_xent(lm, labels, nullptr)) / (2 * h);
        CHECK(g.v[i] == doctest::Approx(fd).epsilon(1e-4));
    }

    // BCE with logits
    Tensor z(2, 6, 2048);
    for (auto& v : z.v) v = rng.normal();
    std::vector<std::uint8_t> m0(6 * 2048), m1(6 * 2048);
    for (auto& v : m0) v = rng.uniform() < 0.5 ? 1 : 0;
    for (auto& v : m1) v = rng.uniform() < 0.5 ? 1 : 0;
    std::vector<const std::uint8_t*> targets = {m0.data(), m1.data()};
    Tensor gb;
    bce_with_logits(z, targets, &gb);
    for (std::size_t i = 0; i < z.size(); i += 4999) {
        Tensor zp = z, zm = z;
        zp.v[i] += h;
        zm.v[i] -= h;
        const double fd = (bce_with_logits(zp, targets, nullptr) - bce_with_logits(zm, targets, nullptr)) / (2 * h);
        CHECK(gb.v[i] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("task prediction shape validation") {
    TaskPrediction p;
    p.kind = nn::HeadKind::segmenter;
    p.value = Tensor(1, 6, 2048);
    CHECK_NOTHROW(p.validate());
    p.value = Tensor(1, 5, 2048);
    CHECK_THROWS_AS(p.validate(), InputError);
    p.kind = nn::HeadKind::classifier;
    p.value = Tensor(1, 30, 1);
    CHECK_NOTHROW(p.validate());
}

}  // TEST_SUITE
