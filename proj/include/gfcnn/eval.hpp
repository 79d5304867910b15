#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gfcnn/datapipe.hpp"

namespace gfcnn {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::uint64_t> counts;  // n_classes x n_classes

  std::uint64_t& at(std::size_t t, std::size_t p) {
    return counts[t * n_classes + p];
  }
  std::uint64_t at(std::size_t t, std::size_t p) const {
    return counts[t * n_classes + p];
  }
  std::uint64_t row_sum(std::size_t t) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < n_classes; ++p) s += at(t, p);
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

ConfusionMatrix confusion(std::span<const std::size_t> preds,
                          std::span<const std::size_t> labels,
                          std::size_t n_classes);

// Fault diagnosis rate of one class: correctly classified over ground-truth
// count. Rejects an empty class; use make_report for the exclude-and-warn
// policy.
double fdr(const ConfusionMatrix& cm, std::size_t cls);

struct EvalReport {
  ConfusionMatrix confusion;
  std::vector<double> per_class_fdr;   // 0 where undefined
  std::vector<bool> class_defined;     // false for empty classes
  double macro_fdr = 0.0;              // unweighted mean over defined classes
  double accuracy = 0.0;               // diagonal over total
  std::map<std::string, std::string> metadata;
};

// Throws when every class is empty; empty classes are excluded from the
// macro average and flagged in class_defined.
EvalReport make_report(const ConfusionMatrix& cm,
                       std::map<std::string, std::string> metadata = {});

double macro_fdr(const EvalReport& report);

struct CorrelationResult {
  std::size_t n_vars = 0;
  std::vector<double> matrix;  // n_vars x n_vars Pearson coefficients
  std::vector<std::size_t> constant_vars;
};

// Pearson coefficients over all samples of all runs. Constant variables get
// zero off-diagonal coefficients and are listed; the diagonal stays 1.
CorrelationResult correlation_matrix(const SeriesSet& series);

// Plain-text report: metadata, per-class FDR to 4 decimals, macro FDR,
// confusion counts.
void write_report(const EvalReport& report, const std::string& path);

}  // namespace gfcnn
