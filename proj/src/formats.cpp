#include "cyto/formats.hpp"

#include <json.hpp>
#include <sstream>

#include "cyto/dataset.hpp"
#include "cyto/error.hpp"

namespace cyto::formats {

using nlohmann::json;

namespace {

template <typename Fn>
void for_each_line(const std::string& text, const char* what, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

const std::string& class_name(int id) {
  static const std::array<std::string, kNumClasses> names = [] {
    std::array<std::string, kNumClasses> n;
    for (int i = 0; i < kNumClasses; ++i) n[i] = std::string(kClassNames[i]);
    return n;
  }();
  if (id < 0 || id >= kNumClasses) throw ValidationError("class id " + std::to_string(id) + " outside [0,5)");
  return names[id];
}

}  // namespace

std::string feature_line(const risk::LabeledVector& v) {
  return json{{"id", v.id}, {"label", v.label}, {"features", v.values}}.dump() + "\n";
}

std::vector<risk::LabeledVector> parse_features(const std::string& jsonl) {
  std::vector<risk::LabeledVector> out;
  for_each_line(jsonl, "feature file", [&](const json& j) {
    risk::LabeledVector v;
    v.id = j.at("id").get<std::string>();
    v.label = j.contains("label") ? j.at("label").get<int>() : -1;
    v.values = j.at("features").get<std::vector<double>>();
    if (!out.empty() && v.values.size() != out.front().values.size()) {
      throw DimensionError("feature '" + v.id + "' has " + std::to_string(v.values.size()) + " values, expected " +
                           std::to_string(out.front().values.size()));
    }
    out.push_back(std::move(v));
  });
  return out;
}

std::vector<risk::LabeledVector> load_features(const std::filesystem::path& path) {
  return parse_features(read_text(path));
}

void save_features(const std::filesystem::path& path, const std::vector<risk::LabeledVector>& rows) {
  std::string text;
  for (const auto& r : rows) text += feature_line(r);
  write_text(path, text);
}

std::string stats_to_json(const StoredStatistics& stats) {
  json doc;
  doc["format_version"] = 1;
  doc["ridge"] = stats.config.ridge;
  doc["priors"] = stats.config.priors == risk::PriorMode::Equal ? "equal" : "empirical";
  doc["dim"] = stats.classes.empty() ? 0 : stats.classes.front().dim();
  doc["classes"] = json::array();
  for (const auto& s : stats.classes) {
    doc["classes"].push_back({{"class_id", s.class_id()},
                              {"class_name", class_name(s.class_id())},
                              {"count", s.count()},
                              {"mean", s.mean()},
                              {"covariance", s.covariance()}});
  }
  return doc.dump() + "\n";
}

StoredStatistics parse_stats(const std::string& text) {
  StoredStatistics out;
  try {
    const json doc = json::parse(text);
    if (doc.at("format_version").get<int>() != 1) throw FormatError("unsupported statistics format version");
    out.config.ridge = doc.at("ridge").get<double>();
    const std::string priors = doc.at("priors").get<std::string>();
    if (priors == "equal") {
      out.config.priors = risk::PriorMode::Equal;
    } else if (priors == "empirical") {
      out.config.priors = risk::PriorMode::Empirical;
    } else {
      throw FormatError("unknown prior mode '" + priors + "'");
    }
    const int dim = doc.at("dim").get<int>();
    for (const auto& c : doc.at("classes")) {
      std::vector<double> mean = c.at("mean").get<std::vector<double>>();
      if (static_cast<int>(mean.size()) != dim) throw DimensionError("class mean does not match stored dim");
      out.classes.push_back(risk::ClassStatistics::from_moments(c.at("class_id").get<int>(),
                                                                c.at("count").get<size_t>(), std::move(mean),
                                                                c.at("covariance").get<std::vector<double>>()));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed statistics file: ") + e.what());
  }
  for (size_t i = 1; i < out.classes.size(); ++i) {
    if (out.classes[i].class_id() <= out.classes[i - 1].class_id()) {
      throw FormatError("statistics classes must be in ascending id order");
    }
  }
  return out;
}

StoredStatistics load_stats(const std::filesystem::path& path) { return parse_stats(read_text(path)); }

std::string risk_report_line(const std::string& id, const risk::RiskReport& report) {
  json post = json::object(), cos = json::object(), high = json::array();
  for (size_t i = 0; i < report.class_ids.size(); ++i) {
    post[class_name(report.class_ids[i])] = report.posteriors[i];
    cos[class_name(report.class_ids[i])] = report.cosines[i];
  }
  for (int c : report.high_risk_classes) high.push_back(class_name(c));
  json j = {{"id", id},
            {"predicted", class_name(report.predicted_class)},
            {"posteriors", post},
            {"cosine", cos},
            {"high_risk", high}};
  return j.dump() + "\n";
}

std::string bbox_line(const std::string& image_id, const BoundingBox& box) {
  return json{{"image", image_id}, {"box", {box.x_min, box.y_min, box.x_max, box.y_max}}}.dump() + "\n";
}

std::vector<BoxRecord> parse_boxes(const std::string& jsonl) {
  std::vector<BoxRecord> out;
  for_each_line(jsonl, "box file", [&](const json& j) {
    const auto b = j.at("box").get<std::array<int, 4>>();
    out.push_back({j.at("image").get<std::string>(), {b[0], b[1], b[2], b[3]}});
  });
  return out;
}

std::string prediction_line(const PredictionRecord& p) {
  return json{{"id", p.id}, {"label", p.label}, {"predicted", p.predicted}, {"probs", p.probs}}.dump() + "\n";
}

std::vector<PredictionRecord> parse_predictions(const std::string& jsonl) {
  std::vector<PredictionRecord> out;
  for_each_line(jsonl, "prediction file", [&](const json& j) {
    PredictionRecord p;
    p.id = j.at("id").get<std::string>();
    p.label = j.at("label").get<int>();
    p.predicted = j.at("predicted").get<int>();
    p.probs = j.at("probs").get<std::array<float, kNumClasses>>();
    out.push_back(std::move(p));
  });
  return out;
}

std::string report_to_json(const metrics::ClassificationReport& report, const metrics::ConfusionMatrix& cm) {
  json per = json::array();
  for (size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& s = report.per_class[c];
    per.push_back({{"class_id", c},
                   {"class_name", c < static_cast<size_t>(kNumClasses) ? class_name(static_cast<int>(c)) : ""},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support},
                   {"precision_undefined", s.precision_undefined},
                   {"recall_undefined", s.recall_undefined},
                   {"f1_undefined", s.f1_undefined}});
  }
  json rows = json::array();
  for (int t = 0; t < cm.classes(); ++t) {
    json row = json::array();
    for (int p = 0; p < cm.classes(); ++p) row.push_back(cm.at(t, p));
    rows.push_back(row);
  }
  auto avg = [](const metrics::Averages& a) { return json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}}; };
  return json{{"accuracy", report.accuracy},
              {"total", report.total},
              {"macro", avg(report.macro)},
              {"weighted", avg(report.weighted)},
              {"per_class", per},
              {"confusion", rows}}
      .dump(2);
}

}  // namespace cyto::formats
