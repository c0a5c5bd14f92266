#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sprop::metrics {

// Product-moment correlation. Throws StatsError on length mismatch, fewer
// than two points, or zero variance in either input.
double pearson(std::span<const double> x, std::span<const double> y);

struct ClassStats {
  std::string label;
  double accuracy = 0.0;              // percent, one-vs-rest
  std::optional<double> precision;    // percent; absent without predicted positives
  std::optional<double> recall;       // percent; absent without true positives in truth
  std::size_t support = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ClassReport {
  std::vector<ClassStats> classes;
  double overall_accuracy = 0.0;  // percent of exact matches
};

// preds and truth are class indices into `classes`.
ClassReport class_report(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                         std::span<const std::string> classes);

std::size_t argmax(std::span<const double> values);

}  // namespace sprop::metrics
