#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cyto/seg_post.hpp"

namespace cyto::metrics {

/// counts[t][p]: rows are true classes, columns predicted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  void add(int truth, int pred);
  int classes() const noexcept { return classes_; }
  uint64_t at(int truth, int pred) const { return counts_[static_cast<size_t>(truth) * classes_ + pred]; }
  uint64_t total() const noexcept { return total_; }
  uint64_t trace() const;

  uint64_t true_positives(int c) const { return at(c, c); }
  uint64_t false_positives(int c) const;  // column sum minus diagonal
  uint64_t false_negatives(int c) const;  // row sum minus diagonal
  uint64_t true_negatives(int c) const;
  uint64_t support(int c) const;  // row sum

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<uint64_t> counts_;
  uint64_t total_ = 0;
};

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> truths, int classes);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  uint64_t support = 0;
  // Set when the ratio's denominator was zero and the value reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct Averages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  std::vector<ClassScores> per_class;
  Averages macro;     // unweighted mean over classes
  Averages weighted;  // support-weighted mean
  double accuracy = 0.0;
  uint64_t total = 0;
};

/// One-vs-rest precision/recall/F1 per class plus macro and weighted means.
/// Throws UsageError on an empty matrix.
ClassificationReport classification_report(const ConfusionMatrix& cm);

struct SegmentationScore {
  double iou = 0.0;
  double dice = 0.0;
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Pixel counts; both-empty masks score 1.0 on IoU and Dice.
SegmentationScore segmentation_score(const BinaryMask& pred, const BinaryMask& gt);
/// Scores from pooled counts.
SegmentationScore score_from_counts(uint64_t tp, uint64_t fp, uint64_t fn, uint64_t tn);

double iou(const BinaryMask& pred, const BinaryMask& gt);
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Fixed-width text table of a report; `names` labels the rows when given.
std::string format_report(const ClassificationReport& report, std::span<const std::string> names = {});
/// Header row of predicted ids, one row per true class.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace cyto::metrics
