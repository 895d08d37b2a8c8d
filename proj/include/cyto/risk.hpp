#pragma once

#include <span>
#include <string>
#include <vector>

#include "cyto/metrics.hpp"

namespace cyto::risk {

enum class PriorMode { Equal, Empirical };

struct RiskConfig {
  /// Ridge added as ridge * (trace / d) * I to each class covariance.
  double ridge = 1e-6;
  /// Classes whose mean has cosine similarity above this are flagged.
  double cosine_threshold = 0.65;
  PriorMode priors = PriorMode::Equal;
};

void validate(const RiskConfig& cfg);

struct LabeledVector {
  std::string id;
  int label = -1;
  std::vector<double> values;
};

/// Gaussian summary of one class: mean, ridge-regularised covariance and its
/// Cholesky factor, inverse and log-determinant.
class ClassStatistics {
 public:
  /// Unbiased sample moments of >= 2 samples plus ridge.
  static ClassStatistics fit(int class_id, std::span<const std::vector<double>> samples, double ridge);
  /// From stored moments (covariance already regularised). Factorises.
  static ClassStatistics from_moments(int class_id, size_t n, std::vector<double> mean,
                                      std::vector<double> covariance);

  int class_id() const noexcept { return class_id_; }
  size_t count() const noexcept { return n_; }
  int dim() const noexcept { return static_cast<int>(mean_.size()); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  /// Row-major d x d.
  const std::vector<double>& covariance() const noexcept { return cov_; }
  const std::vector<double>& inverse() const noexcept { return inv_; }
  double log_det() const noexcept { return log_det_; }

  /// (x - mean)^T Sigma^-1 (x - mean), via the Cholesky factor.
  double mahalanobis_sq(std::span<const double> x) const;

 private:
  ClassStatistics() = default;
  void factorize();

  int class_id_ = 0;
  size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> cov_;
  std::vector<double> chol_;  // lower triangle, row-major
  std::vector<double> inv_;
  double log_det_ = 0.0;
};

/// Groups by label (ascending class id) and fits each class.
std::vector<ClassStatistics> fit_class_statistics(std::span<const LabeledVector> features, const RiskConfig& cfg);

/// log N(x; mean, Sigma) evaluated entirely in log space.
double log_gaussian_pdf(std::span<const double> x, const ClassStatistics& s);

/// Normalised posteriors over `stats` (same order), via log-sum-exp.
std::vector<double> posterior(std::span<const double> x, std::span<const ClassStatistics> stats,
                              const RiskConfig& cfg);

/// Class id with the largest posterior; ties go to the lowest class id.
int predict_class(std::span<const double> x, std::span<const ClassStatistics> stats, const RiskConfig& cfg);

/// a.b / (|a||b|), clamped to [-1, 1]. Zero-norm input is a ValidationError.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct RiskReport {
  int predicted_class = -1;
  std::vector<int> class_ids;
  std::vector<double> posteriors;
  std::vector<double> cosines;
  std::vector<int> high_risk_classes;
};

/// Likelihoods -> normalised posteriors -> argmax -> cosine to every class mean.
RiskReport assess_risk(std::span<const double> x, std::span<const ClassStatistics> stats, const RiskConfig& cfg);

struct KnnResult {
  std::vector<int> predictions;
  metrics::ConfusionMatrix confusion{1};
  metrics::ClassificationReport report;
  double accuracy = 0.0;
};

/// Euclidean kNN. Votes are tallied over the k nearest training vectors
/// (equal distances keep training order); a vote tie goes to the class whose
/// nearest voter is closest, then to the lowest class id.
KnnResult knn_feature_eval(std::span<const LabeledVector> train, std::span<const LabeledVector> test, int k,
                           int classes);

}  // namespace cyto::risk
