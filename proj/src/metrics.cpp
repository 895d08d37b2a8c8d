#include "cyto/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "cyto/error.hpp"

namespace cyto::metrics {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw ValidationError("confusion matrix needs at least one class");
  counts_.assign(static_cast<size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(int truth, int pred) {
  if (truth < 0 || truth >= classes_ || pred < 0 || pred >= classes_) {
    throw ValidationError("class id outside [0," + std::to_string(classes_) + "): truth " + std::to_string(truth) +
                          ", pred " + std::to_string(pred));
  }
  ++counts_[static_cast<size_t>(truth) * classes_ + pred];
  ++total_;
}

uint64_t ConfusionMatrix::trace() const {
  uint64_t t = 0;
  for (int c = 0; c < classes_; ++c) t += at(c, c);
  return t;
}

uint64_t ConfusionMatrix::false_positives(int c) const {
  uint64_t s = 0;
  for (int t = 0; t < classes_; ++t) s += t == c ? 0 : at(t, c);
  return s;
}

uint64_t ConfusionMatrix::false_negatives(int c) const {
  uint64_t s = 0;
  for (int p = 0; p < classes_; ++p) s += p == c ? 0 : at(c, p);
  return s;
}

uint64_t ConfusionMatrix::true_negatives(int c) const {
  return total_ - true_positives(c) - false_positives(c) - false_negatives(c);
}

uint64_t ConfusionMatrix::support(int c) const { return true_positives(c) + false_negatives(c); }

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> truths, int classes) {
  if (preds.size() != truths.size()) throw DimensionError("predictions and truths differ in length");
  ConfusionMatrix cm(classes);
  for (size_t i = 0; i < preds.size(); ++i) cm.add(truths[i], preds[i]);
  return cm;
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UsageError("classification report of an empty confusion matrix");
  ClassificationReport r;
  r.total = cm.total();
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  const int k = cm.classes();
  for (int c = 0; c < k; ++c) {
    ClassScores s;
    const double tp = static_cast<double>(cm.true_positives(c));
    const double fp = static_cast<double>(cm.false_positives(c));
    const double fn = static_cast<double>(cm.false_negatives(c));
    s.support = cm.support(c);
    if (tp + fp > 0) s.precision = tp / (tp + fp);
    else s.precision_undefined = true;
    if (tp + fn > 0) s.recall = tp / (tp + fn);
    else s.recall_undefined = true;
    if (s.precision + s.recall > 0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    else s.f1_undefined = true;
    r.per_class.push_back(s);

    r.macro.precision += s.precision / k;
    r.macro.recall += s.recall / k;
    r.macro.f1 += s.f1 / k;
    const double w = static_cast<double>(s.support) / static_cast<double>(r.total);
    r.weighted.precision += w * s.precision;
    r.weighted.recall += w * s.recall;
    r.weighted.f1 += w * s.f1;
  }
  return r;
}

SegmentationScore score_from_counts(uint64_t tp, uint64_t fp, uint64_t fn, uint64_t tn) {
  SegmentationScore s{1.0, 1.0, tp, fp, fn, tn};
  if (tp + fp + fn > 0) {
    s.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    // Algebraically 2TP/(2TP+FP+FN); derived from IoU so the identity is bit-exact.
    s.dice = 2.0 * s.iou / (1.0 + s.iou);
  }
  return s;
}

SegmentationScore segmentation_score(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw DimensionError("mask extents differ: " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                         " vs " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
  }
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  return score_from_counts(tp, fp, fn, tn);
}

double iou(const BinaryMask& pred, const BinaryMask& gt) { return segmentation_score(pred, gt).iou; }
double dice(const BinaryMask& pred, const BinaryMask& gt) { return segmentation_score(pred, gt).dice; }

std::string format_report(const ClassificationReport& report, std::span<const std::string> names) {
  size_t label_w = 12;
  for (const auto& n : names) label_w = std::max(label_w, n.size());
  std::ostringstream os;
  char buf[160];
  auto row = [&](const std::string& label, double p, double r, double f, const std::string& support) {
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %9s\n", static_cast<int>(label_w), label.c_str(), p, r, f,
                  support.c_str());
    os << buf;
  };
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %9s\n", static_cast<int>(label_w), "class", "precision", "recall",
                "f1", "support");
  os << buf;
  for (size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassScores& s = report.per_class[c];
    const std::string label = c < names.size() ? names[c] : std::to_string(c);
    row(label + (s.precision_undefined || s.recall_undefined ? "*" : ""), s.precision, s.recall, s.f1,
        std::to_string(s.support));
  }
  row("macro avg", report.macro.precision, report.macro.recall, report.macro.f1, std::to_string(report.total));
  row("weighted avg", report.weighted.precision, report.weighted.recall, report.weighted.f1,
      std::to_string(report.total));
  std::snprintf(buf, sizeof buf, "%-*s %9.4f\n", static_cast<int>(label_w), "accuracy", report.accuracy);
  os << buf;
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "true\\pred";
  for (int p = 0; p < cm.classes(); ++p) os << ',' << p;
  os << '\n';
  for (int t = 0; t < cm.classes(); ++t) {
    os << t;
    for (int p = 0; p < cm.classes(); ++p) os << ',' << cm.at(t, p);
    os << '\n';
  }
  return os.str();
}

}  // namespace cyto::metrics
