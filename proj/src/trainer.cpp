#include "rfenet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rfenet/checkpoint.hpp"

namespace rfenet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(base_lr > 0)) throw ConfigError("train.base_lr must be > 0");
  if (!(power > 0)) throw ConfigError("train.power must be > 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (max_iters < 0) throw ConfigError("train.max_iters must be >= 0");
  if (clip_norm < 0) throw ConfigError("train.clip_norm must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.base_lr = cfg.get_double("train.base_lr");
  t.power = cfg.get_double("train.power");
  t.momentum = cfg.get_double("train.momentum");
  t.weight_decay = cfg.get_double("train.weight_decay");
  t.epochs = cfg.get_int("train.epochs");
  t.batch_size = cfg.get_int("train.batch_size");
  t.seed = cfg.get_u64("train.seed");
  t.ablation = parse_variant(cfg.get("train.ablation"));
  t.max_iters = cfg.get_int("train.max_iters");
  t.clip_norm = cfg.get_double("train.clip_norm");
  t.checkpoint_every = cfg.get_int("train.checkpoint_every");
  t.validate();
  return t;
}

double poly_lr(double base_lr, long step, long total, double power) {
  if (total <= 0 || step < 0 || step > total) {
    throw ConfigError("poly_lr: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total) + "]");
  }
  return base_lr * std::pow(1.0 - double(step) / double(total), power);
}

void Sgd::step(ParameterSet<float>& params, double lr) {
  const float m = float(momentum_), wd = float(weight_decay_), a = float(lr);
  for (const auto& p : params) {
    if (!p->trainable) continue;
    auto [it, fresh] = velocity_.try_emplace(p->name);
    if (fresh) it->second = Mat<float>::Zero(p->value.rows(), p->value.cols());
    Mat<float>& v = it->second;
    v = m * v + p->grad + wd * p->value;
    p->value -= a * v;
  }
}

double clip_gradients(ParameterSet<float>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    if (p->trainable) sq += p->grad.template cast<double>().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float scale = float(max_norm / norm);
    for (const auto& p : params) {
      if (p->trainable) p->grad *= scale;
    }
  }
  return norm;
}

long batches_per_epoch(std::size_t samples, int batch_size) {
  return long((samples + std::size_t(batch_size) - 1) / std::size_t(batch_size));
}

std::string log_header() {
  return "iter,total,L_s_out,L_s_1,L_s_2,L_s_3,L_s_4,L_b_1,L_b_2,L_b_3,L_b_4,lr";
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string log_row(long iter, const LossReport& r, double lr) {
  std::string s_cols[5], b_cols[5];
  for (std::size_t i = 0; i < r.stages.size(); ++i) {
    const int st = r.stages[i];
    if (st >= 1 && st <= 4) {
      s_cols[st] = fmt(r.s_stage[i]);
      b_cols[st] = fmt(r.b_stage[i]);
    }
  }
  std::string row = std::to_string(iter) + "," + fmt(r.total) + "," + fmt(r.s_out);
  for (int i = 1; i <= 4; ++i) row += "," + s_cols[i];
  for (int i = 1; i <= 4; ++i) row += "," + b_cols[i];
  return row + "," + fmt(lr);
}

bool grads_finite(const ParameterSet<float>& params) {
  for (const auto& p : params) {
    if (p->trainable && !all_finite(p->grad)) return false;
  }
  return true;
}

[[noreturn]] void numerical_failure(const fs::path& out_dir, long iter,
                                    const std::vector<const GlassSample*>& batch,
                                    const std::string& what) {
  std::string ids;
  for (const GlassSample* s : batch) ids += (ids.empty() ? "" : " ") + s->id;
  const fs::path dump = out_dir / "nan_batch.txt";
  std::ofstream os(dump);
  os << "iteration " << iter << "\n" << what << "\nbatch: " << ids << "\n";
  throw NumericalError(what + " at iteration " + std::to_string(iter) + ", batch [" + ids +
                       "], dump written to " + dump.string());
}

}  // namespace

TrainResult train_network(Network<float>& net, const Config& cfg,
                          const std::vector<GlassSample>& samples, const fs::path& out_dir) {
  const TrainConfig tc = train_config(cfg);
  const LossConfig lc = loss_config(cfg);
  if (samples.empty()) throw DataError("no training samples");
  fs::create_directories(out_dir);

  const long per_epoch = batches_per_epoch(samples.size(), tc.batch_size);
  long total = per_epoch * tc.epochs;
  if (tc.max_iters > 0) total = std::min(total, tc.max_iters);

  TrainResult result;
  result.log = out_dir / "train_log.csv";
  result.checkpoint = out_dir / "checkpoint.bin";
  std::ofstream log(result.log);
  if (!log) throw IoError("cannot write training log", result.log.string());
  log << "# base_lr=" << fmt(tc.base_lr) << " weight_decay=" << fmt(tc.weight_decay)
      << " momentum=" << fmt(tc.momentum) << " power=" << fmt(tc.power)
      << " epochs=" << tc.epochs << " batch_size=" << tc.batch_size << " seed=" << tc.seed
      << " iterations=" << total << " ablation=" << to_string(net.config().variant)
      << " lambda_s=" << fmt(lc.lambda_s) << " lambda_b=" << fmt(lc.lambda_b) << "\n"
      << log_header() << "\n";

  const std::string config_text = cfg.to_text();
  const std::uint64_t arch = net.architecture_hash();
  ParameterSet<float>& params = net.parameters();
  Sgd opt(tc.momentum, tc.weight_decay);
  Rng shuffle_rng(tc.seed ^ 0x5851f42d4c957f2dull);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int n_classes = net.config().n_classes;

  long iter = 0;
  for (int epoch = 0; epoch < tc.epochs && iter < total; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (long b = 0; b < per_epoch && iter < total; ++b) {
      std::vector<const GlassSample*> batch;
      const std::size_t lo = std::size_t(b) * std::size_t(tc.batch_size);
      const std::size_t hi = std::min(samples.size(), lo + std::size_t(tc.batch_size));
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&samples[order[i]]);

      const double lr = poly_lr(tc.base_lr, iter, total, tc.power);
      Graph<float> g(true, true);
      const NetworkOutput<float> out = net.forward(g.input(batch_images<float>(batch)));
      const JointLoss<float> loss = attach_supervision(out, batch, n_classes, lc);
      if (!std::isfinite(loss.report.total)) {
        numerical_failure(out_dir, iter, batch, "non-finite loss");
      }
      params.zero_grad();
      g.backward(loss.total);
      if (!grads_finite(params)) numerical_failure(out_dir, iter, batch, "non-finite gradient");
      clip_gradients(params, tc.clip_norm);
      opt.step(params, lr);

      log << log_row(iter, loss.report, lr) << "\n";
      if (iter == 0) result.initial_loss = loss.report.total;
      result.final_loss = loss.report.total;
      result.history.push_back(loss.report);
      ++iter;
    }
    if ((epoch + 1) % tc.checkpoint_every == 0) {
      save_checkpoint(result.checkpoint, params, arch, config_text);
    }
  }
  save_checkpoint(result.checkpoint, params, arch, config_text);
  result.iterations = iter;
  return result;
}

TrainResult train(const Config& cfg, const fs::path& dataset_root, const fs::path& out_dir) {
  const Manifest manifest = read_manifest(dataset_root);
  const NetworkConfig nc = network_config(cfg);
  if (manifest.n_classes != nc.n_classes) {
    throw DataError("dataset has " + std::to_string(manifest.n_classes) +
                    " classes but data.n_classes = " + std::to_string(nc.n_classes));
  }
  const std::vector<GlassSample> samples = read_split(dataset_root, "train");
  Network<float> net(nc, cfg.get_u64("train.seed"));
  return train_network(net, cfg, samples, out_dir);
}

Evaluation evaluate(const Network<float>& net, const std::vector<GlassSample>& samples,
                    double beta2, bool per_image, int batch_size) {
  if (samples.empty()) throw DataError("no samples to evaluate");
  const int n_classes = net.config().n_classes;
  ConfusionMatrix cm(n_classes);
  ProbabilityStats stats;
  Evaluation ev;
  for (std::size_t lo = 0; lo < samples.size(); lo += std::size_t(batch_size)) {
    const std::size_t hi = std::min(samples.size(), lo + std::size_t(batch_size));
    std::vector<const GlassSample*> batch;
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(&samples[i]);
    Graph<float> g(false, false);
    const NetworkOutput<float> out = net.forward(g.input(batch_images<float>(batch)));
    const Mat<float> probs = channel_softmax(out.logits.data());
    const std::vector<int> pred = channel_argmax(probs);
    const Index P = Index(batch.front()->height) * batch.front()->width;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const GlassSample& s = *batch[b];
      for (int v : s.mask) {
        if (v < 0 || v >= n_classes) throw DataError("sample " + s.id + ": class id out of range");
      }
      const Index off = Index(b) * P;
      std::vector<int> p(pred.begin() + off, pred.begin() + off + P);
      std::vector<double> fg(static_cast<std::size_t>(P));
      for (Index j = 0; j < P; ++j) fg[std::size_t(j)] = 1.0 - double(probs(0, off + j));
      ConfusionMatrix one(n_classes);
      one.accumulate(p, s.mask);
      ProbabilityStats one_stats;
      one_stats.accumulate(fg, s.mask);
      cm.merge(one);
      stats.merge(one_stats);
      if (per_image) ev.per_image.push_back({s.id, compute_report(one, one_stats, beta2)});
    }
  }
  ev.report = compute_report(cm, stats, beta2);
  const NetworkConfig& nc = net.config();
  const Index stage_pixels = Index(samples.front().height / 4) * (samples.front().width / 4);
  ev.report.config_echo["K"] = std::to_string(nc.sar.resolve_k(stage_pixels));
  ev.report.config_echo["M"] = std::to_string(nc.sar.resolve_m(stage_pixels));
  ev.report.config_echo["OS"] = std::to_string(nc.encoder.output_stride);
  ev.report.config_echo["variant"] = to_string(nc.variant);
  return ev;
}

std::vector<AblationRow> run_ablation(const Config& cfg, const std::vector<Variant>& variants,
                                      const std::vector<GlassSample>& samples,
                                      const fs::path& out_dir) {
  std::vector<AblationRow> rows;
  const double beta2 = cfg.get_double("eval.beta2");
  for (Variant v : variants) {
    Config vc = cfg;
    vc.set("train.ablation", to_string(v));
    Network<float> net(network_config(vc), vc.get_u64("train.seed"));
    const TrainResult tr = train_network(net, vc, samples, out_dir / to_string(v));
    AblationRow row;
    row.variant = v;
    row.parameters = net.parameters().scalar_count();
    row.final_loss = tr.final_loss;
    row.report = evaluate(net, samples, beta2).report;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant,parameters,final_loss,miou,miou_fg_only,acc,mae,mber,f_beta\n";
  for (const auto& r : rows) {
    os << to_string(r.variant) << "," << r.parameters << "," << fmt(r.final_loss) << ","
       << fmt(r.report.miou) << "," << fmt(r.report.miou_fg_only) << "," << fmt(r.report.acc)
       << "," << fmt(r.report.mae) << "," << fmt(r.report.mber) << "," << fmt(r.report.f_beta)
       << "\n";
  }
  return os.str();
}

}  // namespace rfenet
