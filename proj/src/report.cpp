#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

#include "binary_io.hpp"
#include "cvote/harness.hpp"

namespace cvote {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::string s = "true\\pred";
  for (std::size_t j = 0; j < m.size(); ++j) s += "," + std::to_string(j);
  s += '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    s += std::to_string(i);
    for (auto v : m[i]) s += "," + std::to_string(v);
    s += '\n';
  }
  return s;
}

json storage_json(const StorageReport& s) {
  return {{"feature_bytes", s.feature_bytes},
          {"metadata_bytes", s.metadata_bytes},
          {"budget_bytes", s.budget_bytes},
          {"formula_check", s.formula_check}};
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
}

std::string curve_csv(std::span<const double> acc) {
  std::string curve = "step,accuracy\n";
  for (std::size_t i = 0; i < acc.size(); ++i) curve += std::to_string(i + 1) + "," + fmt_double(acc[i]) + "\n";
  return curve;
}

}  // namespace

json metrics_to_json(const MetricsReport& r) {
  json j;
  j["config"] = config_to_json(r.config);
  j["class_order"] = r.class_order;
  j["accuracies"] = r.accuracies;
  j["avg_accuracy"] = r.avg_accuracy ? json(*r.avg_accuracy) : json(nullptr);
  j["last_accuracy"] = r.last_accuracy ? json(*r.last_accuracy) : json(nullptr);
  json steps = json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"task", s.task},
                     {"classes_seen", s.classes_seen},
                     {"test_count", s.test_count},
                     {"correct", s.correct},
                     {"accuracy", s.accuracy},
                     {"mean_train_loss", s.mean_train_loss},
                     {"beta", s.beta},
                     {"newest_task_fraction", s.newest_task_fraction},
                     {"confusion", s.confusion}});
  }
  j["steps"] = steps;
  json bias = {{"norms", r.bias.norms},
               {"task_of_class", r.bias.task_of_class},
               {"task_mean_norms", r.bias.task_mean_norms},
               {"newest_task_fraction", r.bias.newest_task_fraction}};
  bias["trend"] = r.bias.trend ? json{{"slope", r.bias.trend->slope}, {"intercept", r.bias.trend->intercept}}
                               : json(nullptr);
  j["bias"] = bias;
  j["storage"] = storage_json(r.storage);
  j["online_audit"] = {{"train_records", r.train_records},
                       {"new_samples_trained", r.new_samples_trained},
                       {"train_steps", r.train_steps}};
  return j;
}

std::string accuracy_svg(std::span<const double> acc) {
  constexpr double W = 640, H = 360, L = 50, R = 20, T = 20, B = 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = H - B - (H - T - B) * tick / 4.0;
    s << "<text x=\"" << L - 8 << "\" y=\"" << y + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << tick * 25
      << "%</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" font-size=\"12\" text-anchor=\"middle\">task</text>\n";
  if (!acc.empty()) {
    const double dx = acc.size() > 1 ? (W - L - R) / static_cast<double>(acc.size() - 1) : 0.0;
    s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < acc.size(); ++i) {
      s << (i ? " " : "") << L + dx * static_cast<double>(i) << "," << H - B - (H - T - B) * acc[i];
    }
    s << "\"/>\n";
    for (std::size_t i = 0; i < acc.size(); ++i) {
      s << "<circle cx=\"" << L + dx * static_cast<double>(i) << "\" cy=\"" << H - B - (H - T - B) * acc[i]
        << "\" r=\"3\" fill=\"steelblue\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

void emit(const MetricsReport& r, const std::filesystem::path& outdir) {
  make_dir(outdir);
  detail::write_text(outdir / "metrics.json", metrics_to_json(r).dump(2) + "\n");
  detail::write_text(outdir / "accuracy_curve.csv", curve_csv(r.accuracies));

  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& s = r.steps[i];
    const std::string k = std::to_string(i + 1);
    detail::write_text(outdir / ("confusion_step" + k + ".csv"), confusion_csv(s.confusion));
    std::string preds = "index,truth,prediction\n";
    for (std::size_t n = 0; n < s.truths.size(); ++n) {
      preds += std::to_string(n) + "," + std::to_string(s.truths[n]) + "," + std::to_string(s.predictions[n]) + "\n";
    }
    detail::write_text(outdir / ("predictions_step" + k + ".csv"), preds);
  }

  std::string norms = "class,norm,task\n";
  for (std::size_t c = 0; c < r.bias.norms.size(); ++c) {
    norms += std::to_string(c) + "," + fmt_double(r.bias.norms[c]) + "," + std::to_string(r.bias.task_of_class[c]) + "\n";
  }
  detail::write_text(outdir / "weight_norms.csv", norms);
  detail::write_text(outdir / "storage.json", storage_json(r.storage).dump(2) + "\n");

  json timing = json::array();
  for (const auto& t : r.timing) timing.push_back({{"learn_seconds", t.learn_seconds}, {"eval_seconds", t.eval_seconds}});
  detail::write_text(outdir / "timing.json", timing.dump(2) + "\n");

  if (r.config.write_svg) detail::write_text(outdir / "curve.svg", accuracy_svg(r.accuracies));
}

RecomputedMetrics recompute_from_predictions(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::data, dir.string() + " is not a directory");
  static const std::regex pattern(R"(predictions_step(\d+)\.csv)");
  std::map<std::size_t, std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) files[std::stoul(m[1].str())] = entry.path();
  }
  if (files.empty()) fail(ErrorKind::data, "no predictions_step*.csv files in " + dir.string());

  RecomputedMetrics out;
  std::size_t expected = 1;
  for (const auto& [step, path] : files) {
    if (step != expected++) fail(ErrorKind::data, "predictions files are not numbered 1..N in " + dir.string());
    const auto bytes = detail::read_file(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    std::getline(in, line);
    if (line.rfind("index,truth,prediction", 0) != 0) fail(ErrorKind::data, path.string() + ": bad header on line 1");
    std::vector<ClassIndex> truths, preds;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      unsigned long idx = 0, t = 0, p = 0;
      char extra = 0;
      if (std::sscanf(line.c_str(), "%lu,%lu,%lu%c", &idx, &t, &p, &extra) != 3) {
        fail(ErrorKind::data, path.string() + ": malformed row on line " + std::to_string(line_no));
      }
      truths.push_back(static_cast<ClassIndex>(t));
      preds.push_back(static_cast<ClassIndex>(p));
    }
    std::uint32_t classes = 0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      classes = std::max({classes, truths[i] + 1, preds[i] + 1});
      if (truths[i] == preds[i]) ++correct;
    }
    out.accuracies.push_back(truths.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truths.size()));
    out.confusions.push_back(confusion(preds, truths, classes));
  }
  const auto al = avg_last(out.accuracies);
  out.avg_accuracy = al.avg;
  out.last_accuracy = al.last;
  return out;
}

void emit_recomputed(const RecomputedMetrics& m, const std::filesystem::path& outdir) {
  make_dir(outdir);
  detail::write_text(outdir / "accuracy_curve.csv", curve_csv(m.accuracies));
  for (std::size_t i = 0; i < m.confusions.size(); ++i) {
    detail::write_text(outdir / ("confusion_step" + std::to_string(i + 1) + ".csv"), confusion_csv(m.confusions[i]));
  }
}

}  // namespace cvote
