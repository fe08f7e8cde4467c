#pragma once

// Confusion matrix and the accuracy / precision / recall / F1 suite.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace railwave {

/// counts[true][pred]; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * k_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t column_sum(std::size_t pred) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix accumulate(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes);

/// trace / total
double accuracy(const ConfusionMatrix& cm);

/// Empty optional marks a zero denominator.
struct ClassMetrics {
  int class_id = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

/// Pooled TP / (TP + FP) and TP / (TP + FN) over all classes.
double micro_precision(const ConfusionMatrix& cm);
double micro_recall(const ConfusionMatrix& cm);

/// Four decimal places; undefined renders as an empty string.
std::string format_metric(const std::optional<double>& value);

std::string class_name(std::size_t id);

struct ReportPaths {
  std::string confusion_csv;
  std::string metrics_csv;
  std::string table_txt;
};

/// Writes confusion_matrix.csv, metrics.csv and report.txt into `dir`.
ReportPaths emit_report(const ConfusionMatrix& cm, const std::vector<ClassMetrics>& metrics, const std::string& dir);

ConfusionMatrix read_confusion_csv(const std::string& path);

}  // namespace railwave
