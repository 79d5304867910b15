#include "gfcnn/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gfcnn/common.hpp"

namespace gfcnn {

ConfusionMatrix confusion(std::span<const std::size_t> preds,
                          std::span<const std::size_t> labels,
                          std::size_t n_classes) {
  if (preds.size() != labels.size())
    fail(cat("confusion: ", preds.size(), " predictions vs ", labels.size(),
             " labels"));
  if (n_classes < 1) fail("confusion: need at least one class");
  ConfusionMatrix cm;
  cm.n_classes = n_classes;
  cm.counts.assign(n_classes * n_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] >= n_classes)
      fail(cat("confusion: label ", labels[i], " at position ", i,
               " out of range for ", n_classes, " classes"));
    if (preds[i] >= n_classes)
      fail(cat("confusion: prediction ", preds[i], " at position ", i,
               " out of range for ", n_classes, " classes"));
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

double fdr(const ConfusionMatrix& cm, std::size_t cls) {
  if (cls >= cm.n_classes)
    fail(cat("fdr: class ", cls, " out of range for ", cm.n_classes));
  const std::uint64_t total = cm.row_sum(cls);
  if (total == 0)
    fail(cat("fdr: class ", cls, " has no ground-truth samples"));
  return static_cast<double>(cm.at(cls, cls)) / static_cast<double>(total);
}

EvalReport make_report(const ConfusionMatrix& cm,
                       std::map<std::string, std::string> metadata) {
  EvalReport rep;
  rep.confusion = cm;
  rep.metadata = std::move(metadata);
  rep.per_class_fdr.assign(cm.n_classes, 0.0);
  rep.class_defined.assign(cm.n_classes, false);
  double sum = 0.0;
  std::size_t defined = 0;
  std::uint64_t diag = 0;
  for (std::size_t c = 0; c < cm.n_classes; ++c) {
    diag += cm.at(c, c);
    if (cm.row_sum(c) == 0) continue;  // undefined, excluded from the mean
    rep.per_class_fdr[c] = fdr(cm, c);
    rep.class_defined[c] = true;
    sum += rep.per_class_fdr[c];
    ++defined;
  }
  if (defined == 0) fail("make_report: every class is empty");
  rep.macro_fdr = sum / static_cast<double>(defined);
  const std::uint64_t total = cm.total();
  rep.accuracy =
      total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
  return rep;
}

double macro_fdr(const EvalReport& report) { return report.macro_fdr; }

CorrelationResult correlation_matrix(const SeriesSet& series) {
  const std::size_t n = series.n_vars;
  const std::size_t m = series.total_samples();
  if (m < 2) fail(cat("correlation: need at least 2 samples, got ", m));

  std::vector<double> mean(n, 0.0);
  for (const auto& r : series.runs)
    for (std::size_t s = 0; s < r.n_samples; ++s)
      for (std::size_t i = 0; i < n; ++i) mean[i] += r.values[s * n + i];
  for (auto& v : mean) v /= static_cast<double>(m);

  std::vector<double> cov(n * n, 0.0);
  for (const auto& r : series.runs)
    for (std::size_t s = 0; s < r.n_samples; ++s) {
      const double* row = r.values.data() + s * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double di = row[i] - mean[i];
        for (std::size_t j = i; j < n; ++j)
          cov[i * n + j] += di * (row[j] - mean[j]);
      }
    }

  CorrelationResult res;
  res.n_vars = n;
  res.matrix.assign(n * n, 0.0);
  std::vector<double> sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    sd[i] = std::sqrt(cov[i * n + i]);
    if (sd[i] == 0.0) res.constant_vars.push_back(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    res.matrix[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double c = 0.0;
      if (sd[i] > 0.0 && sd[j] > 0.0) {
        c = cov[i * n + j] / (sd[i] * sd[j]);
        if (c > 1.0) c = 1.0;
        if (c < -1.0) c = -1.0;
      }
      res.matrix[i * n + j] = c;
      res.matrix[j * n + i] = c;  // mirrored, exactly symmetric
    }
  }
  return res;
}

void write_report(const EvalReport& rep, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path, " for writing"));
  f << "gfcnn-eval-report v1\n";
  for (const auto& [k, v] : rep.metadata) f << "meta " << k << " " << v << "\n";
  f << "classes " << rep.confusion.n_classes << "\n";
  f << "samples " << rep.confusion.total() << "\n";
  char buf[32];
  for (std::size_t c = 0; c < rep.confusion.n_classes; ++c) {
    f << "class " << c + 1 << " fdr ";
    if (rep.class_defined[c]) {
      std::snprintf(buf, sizeof buf, "%.4f", rep.per_class_fdr[c]);
      f << buf;
    } else {
      f << "undefined (no samples)";
    }
    f << " support " << rep.confusion.row_sum(c) << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.4f", rep.macro_fdr);
  f << "macro_fdr " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.4f", rep.accuracy);
  f << "accuracy " << buf << "\n";
  f << "confusion rows=true cols=predicted\n";
  for (std::size_t t = 0; t < rep.confusion.n_classes; ++t) {
    for (std::size_t p = 0; p < rep.confusion.n_classes; ++p) {
      if (p) f << " ";
      f << rep.confusion.at(t, p);
    }
    f << "\n";
  }
  if (!f) io_fail(cat("failed writing ", path));
}

}  // namespace gfcnn
