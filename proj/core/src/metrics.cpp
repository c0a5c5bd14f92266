#include "sprop/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "sprop/error.hpp"

namespace sprop::metrics {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatsError("pearson: length mismatch");
  if (x.size() < 2) throw StatsError("pearson: at least two points required");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw StatsError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ClassReport class_report(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                         std::span<const std::string> classes) {
  if (preds.size() != truth.size()) throw StatsError("class_report: length mismatch");
  if (preds.empty()) throw StatsError("class_report: no examples");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes.size() || truth[i] >= classes.size()) {
      throw StatsError("class_report: unknown label index at row " + std::to_string(i));
    }
  }
  const double n = static_cast<double>(preds.size());
  ClassReport report;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == truth[i];
  report.overall_accuracy = 100.0 * static_cast<double>(correct) / n;

  for (std::size_t c = 0; c < classes.size(); ++c) {
    ClassStats s;
    s.label = classes[c];
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i] == c;
      const bool t = truth[i] == c;
      s.tp += p && t;
      s.fp += p && !t;
      s.fn += !p && t;
      s.tn += !p && !t;
    }
    s.support = s.tp + s.fn;
    s.accuracy = 100.0 * static_cast<double>(s.tp + s.tn) / n;
    if (s.tp + s.fp > 0) s.precision = 100.0 * static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    if (s.tp + s.fn > 0) s.recall = 100.0 * static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
    report.classes.push_back(std::move(s));
  }
  return report;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw StatsError("argmax of empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace sprop::metrics
