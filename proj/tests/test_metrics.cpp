#include <doctest.h>

#include <cmath>
#include <random>

#include "rfenet/errors.hpp"
#include "rfenet/metrics.hpp"

using namespace rfenet;

namespace {

struct Case {
  std::vector<int> gt, pred;
  std::vector<double> fg;
};

Case random_case(std::mt19937_64& rng, int pixels = 64, int classes = 3) {
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::uniform_real_distribution<double> u(0, 1);
  Case c;
  for (int i = 0; i < pixels; ++i) {
    c.gt.push_back(cls(rng));
    c.pred.push_back(cls(rng));
    c.fg.push_back(u(rng));
  }
  return c;
}

MetricsReport score(const Case& c, int classes = 3) {
  ConfusionMatrix cm(classes);
  cm.accumulate(c.pred, c.gt);
  ProbabilityStats st;
  st.accumulate(c.fg, c.gt);
  return compute_report(cm, st);
}

// Brute-force per-pixel recount of every metric.
struct Oracle {
  double miou = 0, miou_fg = 0, acc = 0, mae = 0, mber = 0, fbeta = 0;
};

Oracle recount(const Case& c, int classes = 3, double beta2 = 0.3) {
  Oracle o;
  const std::size_t n = c.gt.size();
  int present = 0, present_fg = 0;
  for (int k = 0; k < classes; ++k) {
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool g = c.gt[i] == k, p = c.pred[i] == k;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
      tn += !g && !p;
    }
    if (tp + fn == 0) continue;
    const double iou = tp / (tp + fp + fn);
    o.miou += iou;
    ++present;
    if (k == 0) continue;
    o.miou_fg += iou;
    ++present_fg;
    const double tnr = tn + fp > 0 ? tn / (tn + fp) : 1.0;
    o.mber += 100.0 * (1.0 - 0.5 * (tp / (tp + fn) + tnr));
  }
  o.miou /= present;
  if (present_fg) {
    o.miou_fg /= present_fg;
    o.mber /= present_fg;
  }
  double correct = 0, ae = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    correct += c.gt[i] == c.pred[i];
    ae += std::abs(c.fg[i] - (c.gt[i] > 0 ? 1.0 : 0.0));
    const bool g = c.gt[i] > 0, p = c.pred[i] > 0;
    tp += g && p;
    fp += !g && p;
    fn += g && !p;
  }
  o.acc = correct / double(n);
  o.mae = ae / double(n);
  if (tp + fp + fn == 0) {
    o.fbeta = 1;
  } else {
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0, rec = tp + fn > 0 ? tp / (tp + fn) : 0;
    o.fbeta = prec + rec > 0 ? (1 + beta2) * prec * rec / (beta2 * prec + rec) : 0;
  }
  return o;
}

}  // namespace

TEST_CASE("metrics match a brute-force recount on random 8x8 three-class maps") {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 200; ++t) {
    const Case c = random_case(rng);
    const MetricsReport r = score(c);
    const Oracle o = recount(c);
    CHECK(std::abs(r.miou - o.miou) < 1e-10);
    CHECK(std::abs(r.miou_fg_only - o.miou_fg) < 1e-10);
    CHECK(std::abs(r.acc - o.acc) < 1e-10);
    CHECK(std::abs(r.mae - o.mae) < 1e-10);
    CHECK(std::abs(r.mber - o.mber) < 1e-10);
    CHECK(std::abs(r.f_beta - o.fbeta) < 1e-10);
  }
}

TEST_CASE("perfect prediction scores (1, 1, 0, 0, 1)") {
  std::mt19937_64 rng(1);
  Case c = random_case(rng);
  c.pred = c.gt;
  for (std::size_t i = 0; i < c.gt.size(); ++i) c.fg[i] = c.gt[i] > 0 ? 1.0 : 0.0;
  const MetricsReport r = score(c);
  CHECK(r.miou == 1.0);
  CHECK(r.acc == 1.0);
  CHECK(r.mae == 0.0);
  CHECK(r.mber == 0.0);
  CHECK(r.f_beta == 1.0);
}

TEST_CASE("all-background prediction on half-foreground ground truth gives BER 50") {
  Case c;
  for (int i = 0; i < 64; ++i) {
    c.gt.push_back(i < 32 ? 1 : 0);
    c.pred.push_back(0);
    c.fg.push_back(0.0);
  }
  const MetricsReport r = score(c, 2);
  CHECK(r.mber == 50.0);
  CHECK(r.f_beta == 0.0);
  CHECK(r.mae == 0.5);
}

TEST_CASE("mIoU and accuracy are invariant to consistent relabeling") {
  std::mt19937_64 rng(3);
  const std::vector<int> perm{2, 0, 1};
  for (int t = 0; t < 20; ++t) {
    const Case c = random_case(rng);
    Case p = c;
    for (auto& v : p.gt) v = perm[v];
    for (auto& v : p.pred) v = perm[v];
    ConfusionMatrix a(3), b(3);
    a.accumulate(c.pred, c.gt);
    b.accumulate(p.pred, p.gt);
    ProbabilityStats none;
    none.accumulate(std::vector<double>(64, 0.0), c.gt);
    const auto ra = compute_report(a, none), rb = compute_report(b, none);
    CHECK(std::abs(ra.miou - rb.miou) < 1e-12);
    CHECK(ra.acc == rb.acc);
  }
}

TEST_CASE("mAE is symmetric under p -> 1 - p, y -> 1 - y") {
  std::mt19937_64 rng(4);
  const Case c = random_case(rng, 64, 2);
  Case f = c;
  for (auto& v : f.gt) v = 1 - v;
  for (auto& v : f.fg) v = 1 - v;
  ProbabilityStats a, b;
  a.accumulate(c.fg, c.gt);
  b.accumulate(f.fg, f.gt);
  CHECK(std::abs(a.mae() - b.mae()) < 1e-12);
}

TEST_CASE("binary BER is zero exactly when both recall rates are one") {
  Case c;
  for (int i = 0; i < 16; ++i) {
    c.gt.push_back(i % 2);
    c.pred.push_back(i % 2);
    c.fg.push_back(0.5);
  }
  CHECK(score(c, 2).mber == 0.0);
  c.pred[0] = 1;
  CHECK(score(c, 2).mber > 0.0);
}

TEST_CASE("confusion merge is associative and commutative") {
  std::mt19937_64 rng(5);
  const Case a = random_case(rng), b = random_case(rng), c = random_case(rng);
  auto cm = [](const Case& x) {
    ConfusionMatrix m(3);
    m.accumulate(x.pred, x.gt);
    return m;
  };
  ConfusionMatrix left = cm(a), right = cm(c);
  ConfusionMatrix ab = cm(a);
  ab.merge(cm(b));
  ab.merge(cm(c));
  ConfusionMatrix bc = cm(b);
  bc.merge(cm(c));
  left.merge(bc);
  right.merge(cm(b));
  right.merge(cm(a));
  CHECK(ab.counts() == left.counts());
  CHECK(ab.counts() == right.counts());
  CHECK(ab.total() == 192);
}

TEST_CASE("both mIoU conventions are reported and serialized") {
  std::mt19937_64 rng(6);
  MetricsReport r = score(random_case(rng));
  r.config_echo["K"] = "16";
  CHECK(r.miou == r.miou_with_bg);
  const std::string js = to_json(r);
  for (const char* key : {"miou_with_bg", "miou_fg_only", "acc", "mae", "mber", "f_beta", "K"}) {
    CHECK(js.find(key) != std::string::npos);
  }
  CHECK(csv_header(r).find("miou_fg_only") != std::string::npos);
}

TEST_CASE("invalid inputs are rejected") {
  ConfusionMatrix cm(3);
  CHECK_THROWS_AS(cm.accumulate({0, 1}, {0}), DataError);
  CHECK_THROWS_AS(cm.accumulate({0, 3}, {0, 1}), DataError);
  CHECK_THROWS_AS(compute_report(cm, ProbabilityStats{}), DataError);
}
