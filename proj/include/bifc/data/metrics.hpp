#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bifc/data/raster.hpp"

namespace bifc {

/// K x K pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = kNumClasses)
      : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) {
    return counts_[truth * classes_ + pred];
  }
  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * classes_ + pred];
  }

  void add(std::size_t truth, std::size_t pred) {
    if (truth >= classes_ || pred >= classes_) {
      throw Error("confusion: class index outside 0.." + std::to_string(classes_ - 1));
    }
    ++at(truth, pred);
  }

  void add(const SegMask& truth, const SegMask& pred) {
    if (truth.height() != pred.height() || truth.width() != pred.width()) {
      throw Error("confusion: truth and prediction extents differ");
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
      add(truth.values()[i], pred.values()[i]);
    }
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw Error("confusion: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct SegMetrics {
  /// IoU per class; empty for classes absent from both truth and prediction.
  std::vector<std::optional<double>> iou;
  double miou = 0.0;
  double pa = 0.0;
};

/// IoU_k = TP / (TP + FP + FN); mIoU averages the classes that occur in
/// truth or prediction; PA = trace / total.
inline SegMetrics compute_metrics(const ConfusionMatrix& conf) {
  const std::uint64_t total = conf.total();
  if (total == 0) throw Error("metrics: confusion matrix is empty");
  const std::size_t k = conf.classes();
  SegMetrics m;
  m.iou.resize(k);
  std::uint64_t trace = 0;
  double iou_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += conf.at(c, j);
      col += conf.at(j, c);
    }
    const std::uint64_t tp = conf.at(c, c);
    trace += tp;
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    m.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    iou_sum += *m.iou[c];
    ++present;
  }
  m.miou = iou_sum / static_cast<double>(present);
  m.pa = static_cast<double>(trace) / static_cast<double>(total);
  return m;
}

/// CSV with header `class,iou`, one row per class, then `miou` and `pa`.
inline std::string metrics_csv(const SegMetrics& m) {
  std::ostringstream os;
  os.precision(10);
  os << "class,iou\n";
  for (std::size_t c = 0; c < m.iou.size(); ++c) {
    os << class_name(c) << ',';
    if (m.iou[c]) {
      os << *m.iou[c];
    } else {
      os << "nan";
    }
    os << '\n';
  }
  os << "miou," << m.miou << "\npa," << m.pa << '\n';
  return os.str();
}

}  // namespace bifc
