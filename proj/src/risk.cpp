#include "cyto/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "cyto/error.hpp"

namespace cyto::risk {

void validate(const RiskConfig& cfg) {
  if (!(cfg.ridge > 0.0) || !std::isfinite(cfg.ridge)) throw ValidationError("ridge must be positive");
  if (!(cfg.cosine_threshold > -1.0 && cfg.cosine_threshold < 1.0)) {
    throw ValidationError("cosine threshold must lie in (-1, 1)");
  }
}

ClassStatistics ClassStatistics::fit(int class_id, std::span<const std::vector<double>> samples, double ridge) {
  if (samples.size() < 2) {
    throw ValidationError("class " + std::to_string(class_id) + " needs at least 2 samples, has " +
                          std::to_string(samples.size()));
  }
  if (!(ridge > 0.0)) throw ValidationError("ridge must be positive");
  const size_t d = samples.front().size();
  if (d == 0) throw DimensionError("feature vectors are empty");
  for (const auto& s : samples) {
    if (s.size() != d) throw DimensionError("feature vectors of class " + std::to_string(class_id) + " differ in length");
  }
  const double n = static_cast<double>(samples.size());
  std::vector<double> mean(d, 0.0);
  for (const auto& s : samples) {
    for (size_t i = 0; i < d; ++i) mean[i] += s[i];
  }
  for (double& m : mean) m /= n;

  std::vector<double> cov(d * d, 0.0);
  std::vector<double> centered(d);
  for (const auto& s : samples) {
    for (size_t i = 0; i < d; ++i) centered[i] = s[i] - mean[i];
    for (size_t i = 0; i < d; ++i) {
      for (size_t j = 0; j <= i; ++j) cov[i * d + j] += centered[i] * centered[j];
    }
  }
  double trace = 0.0;
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      cov[i * d + j] /= n - 1.0;
      cov[j * d + i] = cov[i * d + j];
    }
    trace += cov[i * d + i];
  }
  // Scale-aware ridge; a zero-spread class falls back to an absolute ridge.
  const double scale = trace > 0.0 ? trace / static_cast<double>(d) : 1.0;
  for (size_t i = 0; i < d; ++i) cov[i * d + i] += ridge * scale;
  return from_moments(class_id, samples.size(), std::move(mean), std::move(cov));
}

ClassStatistics ClassStatistics::from_moments(int class_id, size_t n, std::vector<double> mean,
                                              std::vector<double> covariance) {
  const size_t d = mean.size();
  if (d == 0 || covariance.size() != d * d) throw DimensionError("covariance must be d x d for a d-dim mean");
  ClassStatistics s;
  s.class_id_ = class_id;
  s.n_ = n;
  s.mean_ = std::move(mean);
  s.cov_ = std::move(covariance);
  s.factorize();
  return s;
}

void ClassStatistics::factorize() {
  const size_t d = mean_.size();
  chol_.assign(d * d, 0.0);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double sum = cov_[i * d + j];
      for (size_t k = 0; k < j; ++k) sum -= chol_[i * d + k] * chol_[j * d + k];
      if (i == j) {
        if (!(sum > 0.0) || !std::isfinite(sum)) {
          throw NumericError("covariance of class " + std::to_string(class_id_) + " is not positive definite");
        }
        chol_[i * d + i] = std::sqrt(sum);
      } else {
        chol_[i * d + j] = sum / chol_[j * d + j];
      }
    }
  }
  log_det_ = 0.0;
  for (size_t i = 0; i < d; ++i) log_det_ += 2.0 * std::log(chol_[i * d + i]);

  // Sigma^-1 = L^-T L^-1, column by column from unit vectors.
  inv_.assign(d * d, 0.0);
  std::vector<double> y(d), x(d);
  for (size_t col = 0; col < d; ++col) {
    for (size_t i = 0; i < d; ++i) {
      double sum = i == col ? 1.0 : 0.0;
      for (size_t k = 0; k < i; ++k) sum -= chol_[i * d + k] * y[k];
      y[i] = sum / chol_[i * d + i];
    }
    for (size_t ii = d; ii-- > 0;) {
      double sum = y[ii];
      for (size_t k = ii + 1; k < d; ++k) sum -= chol_[k * d + ii] * x[k];
      x[ii] = sum / chol_[ii * d + ii];
    }
    for (size_t i = 0; i < d; ++i) inv_[i * d + col] = x[i];
  }
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j < i; ++j) {
      const double avg = 0.5 * (inv_[i * d + j] + inv_[j * d + i]);
      inv_[i * d + j] = inv_[j * d + i] = avg;
    }
  }
}

double ClassStatistics::mahalanobis_sq(std::span<const double> x) const {
  const size_t d = mean_.size();
  if (x.size() != d) {
    throw DimensionError("feature has " + std::to_string(x.size()) + " dims, class statistics have " +
                         std::to_string(d));
  }
  // Solve L z = x - mean; the quadratic form is |z|^2.
  std::vector<double> z(d);
  double q = 0.0;
  for (size_t i = 0; i < d; ++i) {
    double sum = x[i] - mean_[i];
    for (size_t k = 0; k < i; ++k) sum -= chol_[i * d + k] * z[k];
    z[i] = sum / chol_[i * d + i];
    q += z[i] * z[i];
  }
  return q;
}

std::vector<ClassStatistics> fit_class_statistics(std::span<const LabeledVector> features, const RiskConfig& cfg) {
  validate(cfg);
  std::map<int, std::vector<std::vector<double>>> by_class;
  for (const auto& f : features) {
    if (f.label < 0) throw ValidationError("feature '" + f.id + "' has no class label");
    by_class[f.label].push_back(f.values);
  }
  if (by_class.empty()) throw ValidationError("no feature vectors to fit");
  std::vector<ClassStatistics> out;
  int dim = -1;
  for (const auto& [label, samples] : by_class) {
    out.push_back(ClassStatistics::fit(label, samples, cfg.ridge));
    if (dim >= 0 && out.back().dim() != dim) throw DimensionError("classes differ in feature dimension");
    dim = out.back().dim();
  }
  return out;
}

double log_gaussian_pdf(std::span<const double> x, const ClassStatistics& s) {
  const double d = static_cast<double>(s.dim());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + s.log_det() + s.mahalanobis_sq(x));
}

namespace {

std::vector<double> log_joint(std::span<const double> x, std::span<const ClassStatistics> stats,
                              const RiskConfig& cfg) {
  if (stats.size() < 2) throw ValidationError("posterior needs at least 2 fitted classes");
  std::vector<double> lj(stats.size());
  double total_n = 0.0;
  for (const auto& s : stats) total_n += static_cast<double>(s.count());
  for (size_t i = 0; i < stats.size(); ++i) {
    lj[i] = log_gaussian_pdf(x, stats[i]);
    if (cfg.priors == PriorMode::Empirical) lj[i] += std::log(static_cast<double>(stats[i].count()) / total_n);
  }
  return lj;
}

size_t argmax_lowest(const std::vector<double>& v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

std::vector<double> posterior(std::span<const double> x, std::span<const ClassStatistics> stats,
                              const RiskConfig& cfg) {
  std::vector<double> lj = log_joint(x, stats, cfg);
  const double mx = *std::max_element(lj.begin(), lj.end());
  if (!std::isfinite(mx)) throw NumericError("non-finite log-likelihood");
  double total = 0.0;
  for (double& v : lj) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : lj) v /= total;
  return lj;
}

int predict_class(std::span<const double> x, std::span<const ClassStatistics> stats, const RiskConfig& cfg) {
  const std::vector<double> p = posterior(x, stats, cfg);
  // stats are in ascending class-id order, so the first maximum is the lowest id.
  return stats[argmax_lowest(p)].class_id();
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine similarity of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine similarity undefined for a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

RiskReport assess_risk(std::span<const double> x, std::span<const ClassStatistics> stats, const RiskConfig& cfg) {
  validate(cfg);
  RiskReport r;
  r.posteriors = posterior(x, stats, cfg);
  r.predicted_class = stats[argmax_lowest(r.posteriors)].class_id();
  for (const auto& s : stats) {
    r.class_ids.push_back(s.class_id());
    r.cosines.push_back(cosine_similarity(x, s.mean()));
    if (r.cosines.back() > cfg.cosine_threshold) r.high_risk_classes.push_back(s.class_id());
  }
  return r;
}

KnnResult knn_feature_eval(std::span<const LabeledVector> train, std::span<const LabeledVector> test, int k,
                           int classes) {
  if (train.empty() || test.empty()) throw ValidationError("kNN needs non-empty train and test sets");
  if (k < 1 || static_cast<size_t>(k) > train.size()) {
    throw ValidationError("k must lie in [1, " + std::to_string(train.size()) + "]");
  }
  for (const auto& t : train) {
    if (t.label < 0 || t.label >= classes) throw ValidationError("training label outside class range");
    if (t.values.size() != train.front().values.size()) throw DimensionError("training vectors differ in length");
  }
  KnnResult result;
  std::vector<std::pair<double, size_t>> dist(train.size());
  std::vector<int> truths;
  for (const auto& q : test) {
    if (q.values.size() != train.front().values.size()) throw DimensionError("test vector length mismatch");
    for (size_t i = 0; i < train.size(); ++i) {
      double s = 0.0;
      for (size_t j = 0; j < q.values.size(); ++j) {
        const double diff = q.values[j] - train[i].values[j];
        s += diff * diff;
      }
      dist[i] = {s, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::vector<int> votes(static_cast<size_t>(classes), 0);
    std::vector<double> nearest(static_cast<size_t>(classes), std::numeric_limits<double>::infinity());
    for (int i = 0; i < k; ++i) {
      const int label = train[dist[i].second].label;
      ++votes[label];
      nearest[label] = std::min(nearest[label], dist[i].first);
    }
    int best = 0;
    for (int c = 1; c < classes; ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && nearest[c] < nearest[best])) best = c;
    }
    result.predictions.push_back(best);
    truths.push_back(q.label);
  }
  result.confusion = metrics::confusion_matrix(result.predictions, truths, classes);
  result.report = metrics::classification_report(result.confusion);
  result.accuracy = result.report.accuracy;
  return result;
}

}  // namespace cyto::risk
