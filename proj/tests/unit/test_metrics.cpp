#include <doctest.h>

#include <random>

#include "cyto/error.hpp"
#include "cyto/metrics.hpp"
#include "oracles.hpp"

using namespace cyto;
using namespace cyto::metrics;

TEST_CASE("confusion matrix counts") {
  const std::vector<int> truths{0, 0, 1}, preds{0, 1, 1};
  const ConfusionMatrix cm = confusion_matrix(preds, truths, 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.total() == 3);
  CHECK(cm.trace() == 2);
  CHECK(cm.false_positives(1) == 1);
  CHECK(cm.false_negatives(0) == 1);
  CHECK(cm.true_negatives(0) == 1);
  CHECK(cm.support(0) == 2);

  const ConfusionMatrix empty = confusion_matrix(std::vector<int>{}, std::vector<int>{}, 3);
  CHECK(empty.total() == 0);
  CHECK(empty == ConfusionMatrix(3));

  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), ValidationError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, std::vector<int>{0, 1}, 2), DimensionError);
  CHECK_THROWS_AS(ConfusionMatrix(0), ValidationError);
}

TEST_CASE("classification report on hand cases") {
  const ConfusionMatrix cm = confusion_matrix(std::vector<int>{0, 1, 1}, std::vector<int>{0, 0, 1}, 2);
  const ClassificationReport r = classification_report(cm);
  CHECK(r.per_class[0].precision == doctest::Approx(1.0));
  CHECK(r.per_class[0].recall == doctest::Approx(0.5));
  CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].precision == doctest::Approx(0.5));
  CHECK(r.per_class[1].recall == doctest::Approx(1.0));
  CHECK(r.per_class[1].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));

  std::vector<int> diag;
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k <= c; ++k) diag.push_back(c);
  const ClassificationReport perfect = classification_report(confusion_matrix(diag, diag, 4));
  for (const auto& s : perfect.per_class) {
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.f1 == 1.0);
  }
  CHECK(perfect.macro.f1 == 1.0);
  CHECK(perfect.weighted.precision == doctest::Approx(1.0));
  CHECK(perfect.accuracy == 1.0);

  // class 2 never occurs and is never predicted
  const ClassificationReport gap =
      classification_report(confusion_matrix(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 3));
  CHECK(gap.per_class[2].support == 0);
  CHECK(gap.per_class[2].precision_undefined);
  CHECK(gap.per_class[2].recall_undefined);
  CHECK(gap.per_class[2].f1_undefined);
  CHECK(gap.per_class[2].f1 == 0.0);
  CHECK(gap.macro.recall == doctest::Approx(2.0 / 3.0));
  CHECK(gap.weighted.recall == doctest::Approx(1.0));

  CHECK_THROWS_AS(classification_report(ConfusionMatrix(2)), UsageError);
}

TEST_CASE("classification report matches label counting") {
  std::mt19937_64 g(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int classes = 2 + static_cast<int>(g() % 5);
    const int n = 1 + static_cast<int>(g() % 50);
    std::vector<int> preds(n), truths(n);
    for (int i = 0; i < n; ++i) {
      truths[i] = static_cast<int>(g() % classes);
      preds[i] = g() % 3 ? truths[i] : static_cast<int>(g() % classes);
    }
    const ClassificationReport r = classification_report(confusion_matrix(preds, truths, classes));
    const oracle::LabelScores o = oracle::label_scores(preds, truths, classes);
    CHECK(r.accuracy == doctest::Approx(o.accuracy).epsilon(1e-12));
    for (int c = 0; c < classes; ++c) {
      CHECK(r.per_class[c].precision == doctest::Approx(o.precision[c]).epsilon(1e-12));
      CHECK(r.per_class[c].recall == doctest::Approx(o.recall[c]).epsilon(1e-12));
      CHECK(r.per_class[c].f1 == doctest::Approx(o.f1[c]).epsilon(1e-12));
      CHECK(r.per_class[c].support == o.support[c]);
    }
    CHECK(r.macro.precision == doctest::Approx(o.macro_p).epsilon(1e-12));
    CHECK(r.macro.recall == doctest::Approx(o.macro_r).epsilon(1e-12));
    CHECK(r.macro.f1 == doctest::Approx(o.macro_f).epsilon(1e-12));
    CHECK(r.weighted.precision == doctest::Approx(o.weighted_p).epsilon(1e-12));
    CHECK(r.weighted.recall == doctest::Approx(o.weighted_r).epsilon(1e-12));
    CHECK(r.weighted.f1 == doctest::Approx(o.weighted_f).epsilon(1e-12));
  }
}

TEST_CASE("relabelling classes permutes the report rows") {
  std::mt19937_64 g(8);
  const int classes = 4, n = 40;
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<int> preds(n), truths(n), pp(n), pt(n);
  for (int i = 0; i < n; ++i) {
    truths[i] = static_cast<int>(g() % classes);
    preds[i] = static_cast<int>(g() % classes);
    pp[i] = perm[preds[i]];
    pt[i] = perm[truths[i]];
  }
  const auto a = classification_report(confusion_matrix(preds, truths, classes));
  const auto b = classification_report(confusion_matrix(pp, pt, classes));
  for (int c = 0; c < classes; ++c) {
    CHECK(a.per_class[c].precision == b.per_class[perm[c]].precision);
    CHECK(a.per_class[c].recall == b.per_class[perm[c]].recall);
    CHECK(a.per_class[c].f1 == b.per_class[perm[c]].f1);
  }
  CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("segmentation scores") {
  BinaryMask full(8, 4, true), left(8, 4), other(8, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) left.set(x, y);
  for (int y = 0; y < 4; ++y)
    for (int x = 4; x < 8; ++x) other.set(x, y);

  CHECK(iou(left, full) == 0.5);
  CHECK(dice(left, full) == doctest::Approx(2.0 / 3.0));
  CHECK(iou(left, left) == 1.0);
  CHECK(dice(left, left) == 1.0);
  CHECK(iou(left, other) == 0.0);
  CHECK(dice(left, other) == 0.0);
  CHECK(iou(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0);
  CHECK(dice(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0);

  const SegmentationScore s = segmentation_score(left, full);
  CHECK(s.tp == 16);
  CHECK(s.fn == 16);
  CHECK(s.fp == 0);
  CHECK(s.tn == 0);

  CHECK_THROWS_AS(iou(BinaryMask(3, 3), BinaryMask(3, 4)), DimensionError);
}

TEST_CASE("segmentation scores match pixel counting") {
  std::mt19937_64 g(77);
  for (int trial = 0; trial < 400; ++trial) {
    const BinaryMask gt = oracle::random_mask(g, 16, trial % 7 == 0 ? 0.0 : 0.4);
    BinaryMask pred = gt;
    for (auto& b : pred.bits)
      if (g() % 4 == 0) b ^= 1;
    if (trial % 11 == 0) pred = BinaryMask(gt.width, gt.height);
    const oracle::PixelCounts c = oracle::count(pred, gt);
    const SegmentationScore s = segmentation_score(pred, gt);
    CHECK(s.tp == c.tp);
    CHECK(s.fp == c.fp);
    CHECK(s.fn == c.fn);
    CHECK(s.tn == c.tn);
    CHECK(s.iou == oracle::iou(c));
    CHECK(s.dice == doctest::Approx(oracle::dice(c)).epsilon(1e-15));
    CHECK(s.dice == 2 * s.iou / (1 + s.iou));
    CHECK(s.iou <= s.dice);
    CHECK(s.dice <= 1.0);
  }
  const SegmentationScore pooled = score_from_counts(3, 1, 2, 10);
  CHECK(pooled.iou == 0.5);
  CHECK(pooled.dice == doctest::Approx(6.0 / 9.0));
}

TEST_CASE("text and csv renderings") {
  const ConfusionMatrix cm = confusion_matrix(std::vector<int>{0, 1, 1}, std::vector<int>{0, 0, 1}, 2);
  const std::vector<std::string> names{"alpha", "beta"};
  const std::string text = format_report(classification_report(cm), names);
  CHECK(text.find("alpha") != std::string::npos);
  CHECK(text.find("beta") != std::string::npos);
  CHECK(text.find("0.6667") != std::string::npos);
  const std::string csv = confusion_csv(cm);
  CHECK(csv == "true\\pred,0,1\n0,1,1\n1,0,1\n");
}
