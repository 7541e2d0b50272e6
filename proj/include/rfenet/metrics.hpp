#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rfenet {

/// Pixel counts indexed (ground truth, prediction).
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ConfusionMatrix(int n_classes);

  void accumulate(const std::vector<int>& pred, const std::vector<int>& gt);
  void merge(const ConfusionMatrix& other);

  std::int64_t operator()(int gt, int pred) const { return counts_(gt, pred); }
  std::int64_t total() const { return counts_.sum(); }
  int classes() const { return int(counts_.rows()); }
  const Counts& counts() const { return counts_; }

 private:
  Counts counts_;
};

/// Running Σ|p − y| for the foreground probability p = 1 − P(background)
/// against the binary foreground indicator y.
struct ProbabilityStats {
  double abs_error_sum = 0;
  std::int64_t pixels = 0;

  void accumulate(const std::vector<double>& foreground_prob, const std::vector<int>& gt);
  void merge(const ProbabilityStats& other);
  double mae() const { return pixels ? abs_error_sum / double(pixels) : 0.0; }
};

struct MetricsReport {
  double miou = 0;          // same as miou_with_bg
  double miou_with_bg = 0;  // mean IoU over classes present in the ground truth
  double miou_fg_only = 0;  // same, foreground classes only
  double acc = 0;
  double mae = 0;
  double mber = 0;  // percent
  double f_beta = 0;
  double beta2 = 0.3;
  std::vector<std::optional<double>> per_class_iou;  // empty when class absent
  std::map<std::string, std::string> config_echo;
};

/// IoU, pixel accuracy, mAE, mean balance error rate (percent, foreground
/// classes) and F-beta on the binarized foreground.
MetricsReport compute_report(const ConfusionMatrix& cm, const ProbabilityStats& stats,
                             double beta2 = 0.3);

std::string to_json(const MetricsReport& report);
std::string csv_header(const MetricsReport& report);
std::string csv_row(const MetricsReport& report, const std::string& tag);

}  // namespace rfenet
