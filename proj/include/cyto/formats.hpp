#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cyto/classes.hpp"
#include "cyto/metrics.hpp"
#include "cyto/risk.hpp"
#include "cyto/seg_post.hpp"

// Line- and file-level formats exchanged between pipeline stages.
namespace cyto::formats {

// {"id": str, "label": int, "features": [floats]}, one object per line.
std::string feature_line(const risk::LabeledVector& v);
std::vector<risk::LabeledVector> parse_features(const std::string& jsonl);
std::vector<risk::LabeledVector> load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const std::vector<risk::LabeledVector>& rows);

struct StoredStatistics {
  risk::RiskConfig config;  // ridge and priors as fitted; threshold unused
  std::vector<risk::ClassStatistics> classes;
};

// {"format_version", "ridge", "priors", "dim", "classes": [{"class_id",
// "class_name", "count", "mean", "covariance"}]}. The stored covariance
// already includes the ridge.
std::string stats_to_json(const StoredStatistics& stats);
StoredStatistics parse_stats(const std::string& text);
StoredStatistics load_stats(const std::filesystem::path& path);

// {"id", "predicted", "posteriors": {class: p}, "cosine": {class: c},
// "high_risk": [classes]}, keyed by class name.
std::string risk_report_line(const std::string& id, const risk::RiskReport& report);

// {"image": id, "box": [x_min, y_min, x_max, y_max]}
std::string bbox_line(const std::string& image_id, const BoundingBox& box);
struct BoxRecord {
  std::string image;
  BoundingBox box;
};
std::vector<BoxRecord> parse_boxes(const std::string& jsonl);

// {"id", "label", "predicted", "probs": [5]}; label is -1 when unknown.
struct PredictionRecord {
  std::string id;
  int label = -1;
  int predicted = -1;
  std::array<float, kNumClasses> probs{};
};
std::string prediction_line(const PredictionRecord& p);
std::vector<PredictionRecord> parse_predictions(const std::string& jsonl);

std::string report_to_json(const metrics::ClassificationReport& report, const metrics::ConfusionMatrix& cm);

}  // namespace cyto::formats
