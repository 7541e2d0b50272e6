#include "rfenet/metrics.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "rfenet/errors.hpp"

namespace rfenet {

ConfusionMatrix::ConfusionMatrix(int n_classes) {
  if (n_classes < 1) throw ConfigError("confusion matrix needs at least one class");
  counts_ = Counts::Zero(n_classes, n_classes);
}

void ConfusionMatrix::accumulate(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) {
    throw DataError("accumulate: prediction has " + std::to_string(pred.size()) +
                    " pixels, ground truth " + std::to_string(gt.size()));
  }
  const int n = classes();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] < 0 || gt[i] >= n || pred[i] < 0 || pred[i] >= n) {
      throw DataError("accumulate: class id out of range at pixel " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < gt.size(); ++i) ++counts_(gt[i], pred[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes() != classes()) throw DataError("merge: class counts differ");
  counts_ += other.counts_;
}

void ProbabilityStats::accumulate(const std::vector<double>& foreground_prob,
                                  const std::vector<int>& gt) {
  if (foreground_prob.size() != gt.size()) throw DataError("probability map size mismatch");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    abs_error_sum += std::abs(foreground_prob[i] - (gt[i] != 0 ? 1.0 : 0.0));
  }
  pixels += std::int64_t(gt.size());
}

void ProbabilityStats::merge(const ProbabilityStats& other) {
  abs_error_sum += other.abs_error_sum;
  pixels += other.pixels;
}

MetricsReport compute_report(const ConfusionMatrix& cm, const ProbabilityStats& stats,
                             double beta2) {
  const std::int64_t total = cm.total();
  if (total == 0) throw DataError("compute_report: empty confusion matrix");
  const int n = cm.classes();
  const auto& c = cm.counts();
  MetricsReport r;
  r.beta2 = beta2;
  r.per_class_iou.resize(n);

  double iou_all = 0, iou_fg = 0, ber_sum = 0;
  int n_all = 0, n_fg = 0;
  for (int k = 0; k < n; ++k) {
    const double tp = double(c(k, k));
    const double gt_k = double(c.row(k).sum());
    const double pred_k = double(c.col(k).sum());
    const double fn = gt_k - tp, fp = pred_k - tp;
    const double tn = double(total) - tp - fn - fp;
    if (tp + fp + fn > 0) r.per_class_iou[k] = tp / (tp + fp + fn);
    if (gt_k == 0) continue;
    const double iou = tp / (tp + fp + fn);
    iou_all += iou;
    ++n_all;
    if (k == 0) continue;
    iou_fg += iou;
    ++n_fg;
    const double tpr = tp / (tp + fn);
    const double tnr = (tn + fp) > 0 ? tn / (tn + fp) : 1.0;
    ber_sum += 100.0 * (1.0 - 0.5 * (tpr + tnr));
  }
  r.miou_with_bg = n_all ? iou_all / n_all : 0.0;
  r.miou_fg_only = n_fg ? iou_fg / n_fg : 0.0;
  r.miou = r.miou_with_bg;
  r.mber = n_fg ? ber_sum / n_fg : 0.0;
  r.acc = double(c.trace()) / double(total);
  r.mae = stats.mae();

  // Binarized foreground (class != 0).
  const double fg_tp = double(c.bottomRightCorner(n - 1, n - 1).sum());
  const double fg_fp = double(c.row(0).tail(n - 1).sum());
  const double fg_fn = double(c.col(0).tail(n - 1).sum());
  if (fg_tp + fg_fp + fg_fn == 0) {
    r.f_beta = 1.0;
  } else {
    const double precision = fg_tp + fg_fp > 0 ? fg_tp / (fg_tp + fg_fp) : 0.0;
    const double recall = fg_tp + fg_fn > 0 ? fg_tp / (fg_tp + fg_fn) : 0.0;
    const double denom = beta2 * precision + recall;
    r.f_beta = denom > 0 ? (1.0 + beta2) * precision * recall / denom : 0.0;
  }
  return r;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["miou"] = r.miou;
  j["miou_with_bg"] = r.miou_with_bg;
  j["miou_fg_only"] = r.miou_fg_only;
  j["acc"] = r.acc;
  j["mae"] = r.mae;
  j["mber"] = r.mber;
  j["f_beta"] = r.f_beta;
  j["beta2"] = r.beta2;
  j["per_class_iou"] = nlohmann::json::array();
  for (const auto& v : r.per_class_iou) {
    j["per_class_iou"].push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  }
  j["config_echo"] = r.config_echo;
  return j.dump(2);
}

std::string csv_header(const MetricsReport& r) {
  std::ostringstream os;
  os << "tag,miou,miou_with_bg,miou_fg_only,acc,mae,mber,f_beta";
  for (std::size_t k = 0; k < r.per_class_iou.size(); ++k) os << ",iou_" << k;
  for (const auto& [key, value] : r.config_echo) os << "," << key;
  return os.str();
}

std::string csv_row(const MetricsReport& r, const std::string& tag) {
  std::ostringstream os;
  os.precision(10);
  os << tag << "," << r.miou << "," << r.miou_with_bg << "," << r.miou_fg_only << "," << r.acc
     << "," << r.mae << "," << r.mber << "," << r.f_beta;
  for (const auto& v : r.per_class_iou) {
    os << ",";
    if (v) os << *v;
  }
  for (const auto& [key, value] : r.config_echo) os << "," << value;
  return os.str();
}

}  // namespace rfenet
