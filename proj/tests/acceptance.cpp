// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <fstream>
#include <numeric>

#include "rfenet/checkpoint.hpp"
#include "rfenet/trainer.hpp"
#include "test_util.hpp"

using namespace rfenet;
using testutil::gradcheck;
using testutil::random_mat;
using testutil::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient integrity.

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::vector<std::pair<std::string, testutil::GradCheck>> checks;
  SmeConfig sme_cfg;
  sme_cfg.width = 8;
  SarConfig sar_cfg;
  sar_cfg.heads = 2;
  sar_cfg.K = 6;
  sar_cfg.M = 8;

  {
    ParameterSet<double> ps;
    Rng init(2);
    SmeModule<double> sme(ps, "sme", 6, 10, sme_cfg, true, {}, NormKind::group, init);
    auto& s = ps.add("s_in", random_mat<double>(6, 72, rng));
    auto& b = ps.add("b_in", random_mat<double>(10, 72, rng));
    const Mat<double> p1 = random_mat<double>(8, 72, rng), p2 = random_mat<double>(8, 72, rng);
    checks.emplace_back("sme_forward", gradcheck(ps, [&](Graph<double>& g) {
      auto o = sme(g.param(s, 2, 6, 6), g.param(b, 2, 6, 6));
      return ops::add(ops::dot(o.semantic, p1), ops::dot(o.boundary, p2));
    }));
  }
  {
    ParameterSet<double> ps;
    Rng init(3);
    CrossAttention<double> attn(ps, "attn", 8, sar_cfg, init);
    auto& q = ps.add("q_in", random_mat<double>(8, 10, rng));
    auto& v = ps.add("v_in", random_mat<double>(8, 12, rng));
    const Mat<double> p = random_mat<double>(8, 10, rng);
    checks.emplace_back("cross_attend", gradcheck(ps, [&](Graph<double>& g) {
      return ops::dot(attn(g.param(q, 2, 1, 5), g.param(v, 2, 1, 6)), p);
    }, 8));
  }
  {
    ParameterSet<double> ps;
    Rng init(4);
    SarBlock<double> sar(ps, "sar", 8, sar_cfg, init);
    auto& fs_in = ps.add("fs_in", random_mat<double>(8, 60, rng));
    auto& fb_in = ps.add("fb_in", random_mat<double>(8, 60, rng));
    const Tensor<double> sem = random_tensor<double>(3, 2, 5, 6, rng);
    const Tensor<double> bnd = random_tensor<double>(1, 2, 5, 6, rng);
    const Mat<double> p = random_mat<double>(8, 60, rng);
    checks.emplace_back("sar_forward", gradcheck(ps, [&](Graph<double>& g) {
      return ops::dot(sar(g.param(fs_in, 2, 5, 6), g.param(fb_in, 2, 5, 6), g.input(sem),
                          g.input(bnd)),
                      p);
    }, 8));
  }
  {
    ParameterSet<double> ps;
    auto& e = ps.add("edge_logits", random_mat<double>(1, 50, rng, -3, 3));
    Mat<double> t(1, 50);
    for (int j = 0; j < 50; ++j) t(0, j) = j % 4 == 0;
    checks.emplace_back("dice_loss", gradcheck(ps, [&](Graph<double>& g) {
      return ops::dice_loss_with_logits(g.param(e, 2, 5, 5), t, 1.0);
    }, 20));
  }
  {
    ParameterSet<double> ps;
    auto& l = ps.add("logits", random_mat<double>(3, 50, rng, -3, 3));
    std::vector<int> t(50);
    for (int j = 0; j < 50; ++j) t[j] = (j * 7) % 3;
    checks.emplace_back("cross_entropy", gradcheck(ps, [&](Graph<double>& g) {
      return ops::cross_entropy(g.param(l, 2, 5, 5), t);
    }, 20));
  }
  {
    NetworkConfig nc;
    nc.encoder.widths = {8, 8, 12, 12, 16};
    nc.sme.width = 8;
    nc.sar.heads = 2;
    Network<double> net(nc, 5);
    auto& img = net.parameters().add("image", random_mat<double>(3, 32 * 32, rng, 0, 1));
    const Mat<double> p = random_mat<double>(3, 32 * 32, rng);
    checks.emplace_back("cascade_forward", gradcheck(net.parameters(), [&](Graph<double>& g) {
      auto out = net.forward(g.param(img, 1, 32, 32));
      Var<double> loss = ops::dot(out.logits, p);
      for (const auto& st : out.stages) {
        loss = ops::add(loss, ops::scale(ops::sum_squares(st.boundary_logits), 0.1));
      }
      return loss;
    }, 2));
  }
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 300;
  std::string detail;
  for (const auto& [name, r] : checks) {
    ok = ok && r.max_rel_error < 1e-3 && r.checked > 0;
    detail += name + " " + fmt("%.1e", r.max_rel_error) + " (" + std::to_string(r.checked) + "), ";
  }
  return {ok, detail + fmt("%.1fs", elapsed)};
}

// ---------------------------------------------------------------------------
// 2. Selection oracles.

std::vector<Index> sort_oracle(const Mat<double>& s, Index count) {
  std::vector<Index> idx(std::size_t(s.size()));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Index a, Index b) { return s.data()[a] > s.data()[b]; });
  idx.resize(std::size_t(count));
  return idx;
}

Outcome selection_oracles() {
  std::mt19937_64 rng(6);
  int ok_u = 0, ok_b = 0;
  double worst_entropy = 0;
  for (int t = 0; t < 100; ++t) {
    const Tensor<double> probs(channel_softmax(random_mat<double>(3, 256, rng, -4, 4)), 1, 16, 16);
    const Tensor<double> ent = pixel_entropy(probs);
    for (Index j = 0; j < 256; ++j) {
      double direct = 0;
      for (int c = 0; c < 3; ++c) direct -= probs.data(c, j) * std::log(probs.data(c, j));
      worst_entropy = std::max(worst_entropy, std::abs(direct - ent.data(0, j)));
    }
    ok_u += select_uncertain(ent, 16).indices == sort_oracle(ent.data, 16);

    Mat<double> b = random_mat<double>(1, 256, rng, 0, 1);
    if (t % 2) b = (b.array() * 10).floor().matrix() / 10.0;  // forces ties
    ok_b += select_confident_boundary(Tensor<double>(b, 1, 16, 16), 64).indices ==
            sort_oracle(b, 64);
  }
  return {ok_u == 100 && ok_b == 100 && worst_entropy < 1e-10,
          "uncertain " + std::to_string(ok_u) + "/100, boundary " + std::to_string(ok_b) +
              "/100, entropy max err " + fmt("%.1e", worst_entropy)};
}

// ---------------------------------------------------------------------------
// 3. Structural identities.

Outcome structural_identities() {
  std::mt19937_64 rng(7);
  SmeConfig sc;
  sc.width = 8;
  std::string detail;
  bool ok = true;

  {  // zero attention
    ParameterSet<double> ps;
    Rng init(8);
    SmeModule<double> sme(ps, "sme", 6, 10, sc, true, {}, NormKind::group, init);
    sme.blocks().front().head_out().weight().value.setZero();
    sme.blocks().front().head_out().bias()->value.setConstant(-1e30);
    Graph<double> g(false);
    auto o = sme(g.input(random_tensor<double>(6, 2, 8, 8, rng)),
                 g.input(random_tensor<double>(10, 2, 8, 8, rng)));
    const bool same = o.semantic.data() == o.projected_semantic.data() &&
                      o.boundary.data() == o.projected_boundary.data();
    ok = ok && same;
    detail += std::string("zero-attention ") + (same ? "exact" : "DIFFERS");
  }
  SarConfig cfg;
  cfg.heads = 2;
  const Tensor<double> fs = random_tensor<double>(8, 2, 8, 8, rng);
  const Tensor<double> fb = random_tensor<double>(8, 2, 8, 8, rng);
  const Tensor<double> sem = random_tensor<double>(3, 2, 8, 8, rng);
  const Tensor<double> bnd = random_tensor<double>(1, 2, 8, 8, rng);
  {  // scatter locality
    ParameterSet<double> ps;
    Rng init(9);
    SarBlock<double> sar(ps, "sar", 8, cfg, init);
    Graph<double> g(false);
    SarTrace tr;
    auto out = sar(g.input(fs), g.input(fb), g.input(sem), g.input(bnd), &tr);
    int outside = 0;
    for (int b = 0; b < 2; ++b) {
      std::vector<bool> sel(64, false);
      for (Index i : tr.uncertain[b]) sel[std::size_t(i)] = true;
      for (Index j = 0; j < 64; ++j) {
        if (!sel[std::size_t(j)] && out.data().col(b * 64 + j) != fs.data.col(b * 64 + j)) {
          ++outside;
        }
      }
    }
    ok = ok && outside == 0;
    detail += ", changes outside selection " + std::to_string(outside);
  }
  {  // K = 0
    SarConfig zero = cfg;
    zero.K = 0;
    ParameterSet<double> ps;
    Rng init(10);
    SarBlock<double> sar(ps, "sar", 8, zero, init);
    Graph<double> g(false);
    const bool same =
        sar(g.input(fs), g.input(fb), g.input(sem), g.input(bnd)).data() == fs.data;
    ok = ok && same;
    detail += std::string(", K=0 ") + (same ? "identity" : "DIFFERS");
  }
  {  // softmax sums and permutation invariance
    ParameterSet<double> ps;
    Rng init(11);
    CrossAttention<double> attn(ps, "attn", 8, cfg, init);
    const Tensor<double> q = random_tensor<double>(8, 1, 1, 12, rng);
    const Tensor<double> v = random_tensor<double>(8, 1, 1, 20, rng);
    std::vector<Index> perm(20);
    std::iota(perm.begin(), perm.end(), Index(0));
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat<double> vp(8, 20);
    for (Index j = 0; j < 20; ++j) vp.col(j) = v.data.col(perm[j]);
    Graph<double> g(false);
    std::vector<Mat<double>> probs;
    auto a = attn(g.input(q), g.input(v), &probs);
    auto b = attn(g.input(q), g.input(Tensor<double>(vp, 1, 1, 20)));
    double worst_sum = 0;
    for (const auto& p : probs)
      for (Index j = 0; j < p.cols(); ++j) worst_sum = std::max(worst_sum, std::abs(p.col(j).sum() - 1));
    const double perm_err = (a.data() - b.data()).cwiseAbs().maxCoeff();
    ok = ok && worst_sum <= 1e-5 && perm_err <= 1e-6;
    detail += ", softmax sum err " + fmt("%.1e", worst_sum) + ", permutation err " +
              fmt("%.1e", perm_err);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 4. Metric oracles.

Outcome metric_oracles() {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> cls(0, 2);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<int> gt(64), pred(64);
    std::vector<double> fg(64);
    for (int i = 0; i < 64; ++i) {
      gt[i] = cls(rng);
      pred[i] = cls(rng);
      fg[i] = u(rng);
    }
    ConfusionMatrix cm(3);
    cm.accumulate(pred, gt);
    ProbabilityStats st;
    st.accumulate(fg, gt);
    const MetricsReport r = compute_report(cm, st);

    double iou = 0, ber = 0, correct = 0, ae = 0, tp = 0, fp = 0, fn = 0;
    int present = 0, present_fg = 0;
    for (int k = 0; k < 3; ++k) {
      double a = 0, b = 0, c = 0, d = 0;
      for (int i = 0; i < 64; ++i) {
        a += gt[i] == k && pred[i] == k;
        b += gt[i] != k && pred[i] == k;
        c += gt[i] == k && pred[i] != k;
        d += gt[i] != k && pred[i] != k;
      }
      if (a + c == 0) continue;
      iou += a / (a + b + c);
      ++present;
      if (k == 0) continue;
      ++present_fg;
      ber += 100 * (1 - 0.5 * (a / (a + c) + (d + b > 0 ? d / (d + b) : 1)));
    }
    for (int i = 0; i < 64; ++i) {
      correct += gt[i] == pred[i];
      ae += std::abs(fg[i] - (gt[i] > 0));
      tp += gt[i] > 0 && pred[i] > 0;
      fp += gt[i] == 0 && pred[i] > 0;
      fn += gt[i] > 0 && pred[i] == 0;
    }
    const double prec = tp / (tp + fp), rec = tp / (tp + fn);
    const double fb = 1.3 * prec * rec / (0.3 * prec + rec);
    worst = std::max({worst, std::abs(r.miou - iou / present), std::abs(r.acc - correct / 64),
                      std::abs(r.mae - ae / 64), std::abs(r.mber - ber / present_fg),
                      std::abs(r.f_beta - fb)});
  }

  std::vector<int> gt(64), pred(64);
  std::vector<double> fg(64);
  for (int i = 0; i < 64; ++i) gt[i] = pred[i] = i % 3, fg[i] = gt[i] > 0;
  ConfusionMatrix cm(3);
  cm.accumulate(pred, gt);
  ProbabilityStats st;
  st.accumulate(fg, gt);
  const MetricsReport perfect = compute_report(cm, st);
  const bool perfect_ok = perfect.miou == 1 && perfect.acc == 1 && perfect.mae == 0 &&
                          perfect.mber == 0 && perfect.f_beta == 1;

  for (int i = 0; i < 64; ++i) gt[i] = i < 32, pred[i] = 0, fg[i] = 0;
  ConfusionMatrix half(2);
  half.accumulate(pred, gt);
  ProbabilityStats hs;
  hs.accumulate(fg, gt);
  const double ber = compute_report(half, hs).mber;

  return {worst < 1e-10 && perfect_ok && ber == 50.0,
          "max recount err " + fmt("%.1e", worst) + ", perfect (1,1,0,0,1) " +
              (perfect_ok ? "yes" : "no") + ", half-fg BER " + fmt("%.17g", ber)};
}

// ---------------------------------------------------------------------------
// 5. Boundary ground truth.

Outcome boundary_oracle() {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> pos(0, 31), len(2, 14), cls(0, 2);
  int exact = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<int> m(32 * 32, 0);
    for (int r = 0; r < 4; ++r) {
      const int y0 = pos(rng), x0 = pos(rng), h = len(rng), w = len(rng), c = cls(rng);
      for (int y = y0; y < std::min(32, y0 + h); ++y)
        for (int x = x0; x < std::min(32, x0 + w); ++x) m[y * 32 + x] = c;
    }
    std::vector<std::pair<int, int>> tr;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const int v = m[y * 32 + x];
        if ((y > 0 && m[(y - 1) * 32 + x] != v) || (y < 31 && m[(y + 1) * 32 + x] != v) ||
            (x > 0 && m[y * 32 + x - 1] != v) || (x < 31 && m[y * 32 + x + 1] != v)) {
          tr.emplace_back(y, x);
        }
      }
    std::vector<std::uint8_t> expect(32 * 32, 0);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        int best = 1 << 30;
        for (auto [ty, tx] : tr) best = std::min(best, std::max(std::abs(ty - y), std::abs(tx - x)));
        expect[y * 32 + x] = best < 4;  // ceil(8 / 2)
      }
    exact += mask_to_boundary(m, 32, 32, 8) == expect;
  }
  const int thickness = SceneSpec{}.boundary_thickness;
  return {exact == 100 && thickness == 8,
          std::to_string(exact) + "/100 masks exact, default thickness " +
              std::to_string(thickness)};
}

// ---------------------------------------------------------------------------
// 6. Overfit smoke test.

Outcome overfit(const fs::path& scratch) {
  const auto t0 = std::chrono::steady_clock::now();
  Config cfg;
  cfg.apply_overrides({"data.n=8", "data.seed=1", "train.seed=0", "train.batch_size=8",
                       "train.epochs=1200", "model.output_stride=16"});
  DatasetSpec spec = dataset_spec(cfg);
  const auto samples = generate_dataset(spec);
  Network<float> net(network_config(cfg), cfg.get_u64("train.seed"));
  const TrainResult r = train_network(net, cfg, samples, scratch / "overfit");
  const MetricsReport m = evaluate(net, samples).report;
  const double elapsed = seconds_since(t0);
  const double ratio = r.final_loss / r.initial_loss;
  return {r.iterations <= 2000 && m.miou_fg_only >= 0.95 && ratio < 0.1 && elapsed <= 1200,
          std::to_string(r.iterations) + " iterations, fg mIoU " + fmt("%.4f", m.miou_fg_only) +
              ", loss " + fmt("%.4f", r.initial_loss) + " -> " + fmt("%.4f", r.final_loss) +
              " (" + fmt("%.1f%%", 100 * ratio) + "), " + fmt("%.0fs", elapsed)};
}

// ---------------------------------------------------------------------------
// 7. Ablation ordering.

Outcome ablation_ordering(const fs::path& scratch) {
  const auto t0 = std::chrono::steady_clock::now();
  Config cfg;
  cfg.apply_overrides({"data.n=200", "data.seed=2024", "train.seed=0", "train.batch_size=8",
                       "train.epochs=30"});
  const auto all = generate_dataset(dataset_spec(cfg));
  const int n_train = split_counts(200, 0.8, 0.1).at("train");
  const std::vector<GlassSample> train(all.begin(), all.begin() + n_train);
  const auto rows =
      run_ablation(cfg, {Variant::full, Variant::no_sar, Variant::baseline}, train,
                   scratch / "ablation");
  const double full = rows[0].report.miou, no_sar = rows[1].report.miou,
               base = rows[2].report.miou;
  const double tol = 0.005;  // 0.5 mIoU points
  const bool ok = full >= no_sar - tol && no_sar >= base - tol;
  return {ok, "train mIoU full " + fmt("%.4f", full) + ", no_sar " + fmt("%.4f", no_sar) +
                  ", baseline " + fmt("%.4f", base) + " (fg-only " +
                  fmt("%.4f", rows[0].report.miou_fg_only) + " / " +
                  fmt("%.4f", rows[1].report.miou_fg_only) + " / " +
                  fmt("%.4f", rows[2].report.miou_fg_only) + "), " +
                  fmt("%.0fs", seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 8. Determinism.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome determinism(const fs::path& scratch) {
  Config cfg;
  cfg.apply_overrides({"data.n=6", "train.batch_size=4", "train.epochs=5", "train.seed=3"});
  const auto samples = generate_dataset(dataset_spec(cfg));
  auto run = [&](const std::string& name) {
    Network<float> net(network_config(cfg), cfg.get_u64("train.seed"));
    return train_network(net, cfg, samples, scratch / name);
  };
  const TrainResult a = run("det_a"), b = run("det_b");
  const bool logs = slurp(a.log) == slurp(b.log);
  const std::string ha = file_hash(a.checkpoint), hb = file_hash(b.checkpoint);
  return {logs && ha == hb, std::string("logs ") + (logs ? "identical" : "DIFFER") +
                                ", checkpoint " + ha + " / " + hb};
}

// ---------------------------------------------------------------------------
// 9. Loss recombination.

Outcome loss_arithmetic() {
  const LossConfig lc;
  Config cfg;
  const auto samples = generate_dataset(dataset_spec(cfg));
  Network<float> net(network_config(cfg), 0);
  double worst = 0;
  for (std::size_t i = 0; i + 4 <= samples.size() && i < 40; i += 4) {
    std::vector<const GlassSample*> batch;
    for (std::size_t j = i; j < i + 4; ++j) batch.push_back(&samples[j]);
    Graph<float> g(false, true);
    const auto out = net.forward(g.input(batch_images<float>(batch)));
    const LossReport r = attach_supervision(out, batch, 3, lc).report;
    double manual = r.s_out;
    for (std::size_t k = 0; k < r.s_stage.size(); ++k) {
      manual += 0.01 * r.s_stage[k] + 0.25 * r.b_stage[k];
    }
    worst = std::max(worst, std::abs(r.total - manual));
  }
  return {lc.lambda_s == 0.01 && lc.lambda_b == 0.25 && worst < 1e-6,
          "lambda_s " + fmt("%g", lc.lambda_s) + ", lambda_b " + fmt("%g", lc.lambda_b) +
              ", max |total - recombined| " + fmt("%.1e", worst)};
}

}  // namespace

int main() {
  const fs::path scratch = testutil::scratch_dir("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient integrity", gradient_integrity},
      {"2 selection oracles", selection_oracles},
      {"3 structural identities", structural_identities},
      {"4 metric oracles", metric_oracles},
      {"5 boundary ground truth", boundary_oracle},
      {"6 overfit smoke test", [&] { return overfit(scratch); }},
      {"7 ablation ordering", [&] { return ablation_ordering(scratch); }},
      {"8 determinism", [&] { return determinism(scratch); }},
      {"9 loss recombination", loss_arithmetic},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
