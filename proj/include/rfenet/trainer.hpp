#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rfenet/config.hpp"
#include "rfenet/metrics.hpp"
#include "rfenet/network.hpp"

namespace rfenet {

struct TrainConfig {
  double base_lr = 0.04;
  double power = 0.9;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  int epochs = 60;
  int batch_size = 4;
  std::uint64_t seed = 0;
  Variant ablation = Variant::full;
  long max_iters = 0;  // 0 = no cap
  double clip_norm = 10.0;  // 0 disables
  int checkpoint_every = 1;

  void validate() const;
};

TrainConfig train_config(const Config& cfg);

/// base_lr · (1 − step/total)^power.
double poly_lr(double base_lr, long step, long total, double power);

/// SGD with heavy-ball momentum. Weight decay is added to the gradient before
/// the momentum update, so every change to a parameter is scaled by lr.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(ParameterSet<float>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Mat<float>> velocity_;
};

/// Rescales trainable gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_gradients(ParameterSet<float>& params, double max_norm);

/// Iterations per epoch with drop_last = false.
long batches_per_epoch(std::size_t samples, int batch_size);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  long iterations = 0;
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<LossReport> history;
};

/// Training-log CSV column header.
std::string log_header();

/// Trains `net` in place on `samples`, writing `train_log.csv` and
/// `checkpoint.bin` into `out_dir`. Throws NumericalError on a non-finite
/// loss after dumping the offending batch ids to `nan_batch.txt`.
TrainResult train_network(Network<float>& net, const Config& cfg,
                          const std::vector<GlassSample>& samples,
                          const std::filesystem::path& out_dir);

/// Builds the network from `cfg` and trains it on the dataset's train split.
TrainResult train(const Config& cfg, const std::filesystem::path& dataset_root,
                  const std::filesystem::path& out_dir);

struct ImageScore {
  std::string id;
  MetricsReport report;
};

struct Evaluation {
  MetricsReport report;
  std::vector<ImageScore> per_image;
};

/// Inference-mode metrics of `net` over `samples`.
Evaluation evaluate(const Network<float>& net, const std::vector<GlassSample>& samples,
                    double beta2 = 0.3, bool per_image = false, int batch_size = 4);

struct AblationRow {
  Variant variant = Variant::full;
  Index parameters = 0;
  double final_loss = 0;
  MetricsReport report;
};

/// Trains every variant with identical seed and data, then scores each on
/// `samples`. Per-variant outputs land in `out_dir/<variant>/`.
std::vector<AblationRow> run_ablation(const Config& cfg, const std::vector<Variant>& variants,
                                      const std::vector<GlassSample>& samples,
                                      const std::filesystem::path& out_dir);

/// Comparison table as CSV.
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace rfenet
