#include "railwave/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "railwave/binary_io.hpp"
#include "railwave/error.hpp"

namespace railwave {

namespace {

void write_text(const std::string& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw Error(ErrorCode::BadIndex, "confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += at(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, pred);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw Error(ErrorCode::LengthMismatch, "confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix accumulate(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes) {
  if (preds.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(preds.size()) + " predictions vs " + std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm(num_classes);
  const auto k = static_cast<int>(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= k || labels[i] < 0 || labels[i] >= k)
      throw Error(ErrorCode::BadIndex, "sample " + std::to_string(i) + " has class index outside [0," +
                                           std::to_string(k) + ")");
    ++cm.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i]));
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw Error(ErrorCode::EmptyMatrix, "accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out;
  out.reserve(cm.num_classes());
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    const auto tp = cm.at(i, i);
    ClassMetrics m;
    m.class_id = static_cast<int>(i);
    m.precision = ratio(tp, cm.column_sum(i));
    m.recall = ratio(tp, cm.row_sum(i));
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0)
      m.f1 = 2.0 * (*m.precision * *m.recall) / (*m.precision + *m.recall);
    out.push_back(m);
  }
  return out;
}

double micro_precision(const ConfusionMatrix& cm) {
  std::uint64_t tp = cm.trace(), fp = 0;
  for (std::size_t i = 0; i < cm.num_classes(); ++i) fp += cm.column_sum(i) - cm.at(i, i);
  if (tp + fp == 0) throw Error(ErrorCode::EmptyMatrix, "micro precision of an empty confusion matrix");
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double micro_recall(const ConfusionMatrix& cm) {
  std::uint64_t tp = cm.trace(), fn = 0;
  for (std::size_t i = 0; i < cm.num_classes(); ++i) fn += cm.row_sum(i) - cm.at(i, i);
  if (tp + fn == 0) throw Error(ErrorCode::EmptyMatrix, "micro recall of an empty confusion matrix");
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::string format_metric(const std::optional<double>& value) {
  if (!value) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *value);
  return buf;
}

std::string class_name(std::size_t id) { return "TYPE" + std::to_string(id); }

ReportPaths emit_report(const ConfusionMatrix& cm, const std::vector<ClassMetrics>& metrics, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir + ": " + ec.message());
  const auto base = std::filesystem::path(dir);
  ReportPaths paths{(base / "confusion_matrix.csv").string(), (base / "metrics.csv").string(),
                    (base / "report.txt").string()};

  std::ostringstream cm_csv;
  cm_csv << "true\\pred";
  for (std::size_t j = 0; j < cm.num_classes(); ++j) cm_csv << ',' << class_name(j);
  cm_csv << '\n';
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    cm_csv << class_name(i);
    for (std::size_t j = 0; j < cm.num_classes(); ++j) cm_csv << ',' << cm.at(i, j);
    cm_csv << '\n';
  }
  write_text(paths.confusion_csv, cm_csv.str());

  std::ostringstream m_csv;
  m_csv << "class,precision,recall,f1\n";
  for (const auto& m : metrics)
    m_csv << class_name(static_cast<std::size_t>(m.class_id)) << ',' << format_metric(m.precision) << ','
          << format_metric(m.recall) << ',' << format_metric(m.f1) << '\n';
  write_text(paths.metrics_csv, m_csv.str());

  auto cell = [](const std::optional<double>& v) {
    auto s = format_metric(v);
    return s.empty() ? std::string("   -  ") : s;
  };
  std::ostringstream txt;
  char line[128];
  txt << "+---------+-----------+--------+----------+\n";
  txt << "| Class   | Precision | Recall | F1 Score |\n";
  txt << "+---------+-----------+--------+----------+\n";
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof line, "| %-7s |  %-8s | %-6s |  %-7s |\n",
                  class_name(static_cast<std::size_t>(m.class_id)).c_str(), cell(m.precision).c_str(),
                  cell(m.recall).c_str(), cell(m.f1).c_str());
    txt << line;
  }
  txt << "+---------+-----------+--------+----------+\n";
  if (cm.total() > 0) {
    std::snprintf(line, sizeof line, "Accuracy: %.4f (%llu / %llu)\n", accuracy(cm),
                  static_cast<unsigned long long>(cm.trace()), static_cast<unsigned long long>(cm.total()));
    txt << line;
  }
  write_text(paths.table_txt, txt.str());
  return paths;
}

ConfusionMatrix read_confusion_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path);
  std::string line;
  std::getline(in, line);
  const auto k = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::LengthMismatch, path + ": missing row " + std::to_string(i));
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::getline(row, cell, ',')) throw Error(ErrorCode::LengthMismatch, path + ": short row");
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc()) throw Error(ErrorCode::LengthMismatch, path + ": bad count '" + cell + "'");
      cm.at(i, j) = v;
    }
  }
  return cm;
}

}  // namespace railwave
