#include "rfenet/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "rfenet/checkpoint.hpp"
#include "rfenet/config.hpp"
#include "rfenet/trainer.hpp"
#include "rfenet/visualize.hpp"

namespace rfenet {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string split = "test";
  std::string checkpoint;
  std::string image;
};

int worker_count() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("RFENET_NUM_WORKERS");
  if (!env || !*env) return int(hw);
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("RFENET_NUM_WORKERS must be a positive integer");
  return int(v);
}

Config load_config(const Options& o, const std::string* fallback_text = nullptr) {
  Config cfg;
  if (!o.config_path.empty()) {
    cfg = Config::from_file(o.config_path);
  } else if (fallback_text) {
    cfg.parse(*fallback_text, "checkpoint");
  }
  cfg.apply_overrides(o.overrides);
  return cfg;
}

void echo_config(const Config& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  cfg.write(dir / "effective_config.txt");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write", path.string());
  os << text;
}

std::unique_ptr<Network<float>> restore(const Config& cfg, const Checkpoint& ckpt) {
  auto net = std::make_unique<Network<float>>(network_config(cfg), cfg.get_u64("train.seed"));
  load_parameters(ckpt, net->parameters(), net->architecture_hash());
  return net;
}

int cmd_gen_data(const Options& o) {
  const Config cfg = load_config(o);
  const DatasetSpec spec = dataset_spec(cfg);
  const fs::path root = o.out.empty() ? fs::path(cfg.get("data.root")) : fs::path(o.out);
  const auto samples = generate_dataset(spec, worker_count());
  const Manifest m = write_dataset(samples, root, spec.train_fraction, spec.val_fraction,
                                   spec.scene.n_classes, spec.scene.boundary_thickness);
  echo_config(cfg, root);
  std::cout << "dataset " << root.string() << ": " << samples.size() << " samples, " << m.height
            << "x" << m.width << ", " << m.n_classes << " classes";
  for (const auto& [split, ids] : m.splits) std::cout << ", " << split << "=" << ids.size();
  std::cout << "\nmanifest hash " << file_hash(root / "manifest.json") << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  const Config cfg = load_config(o);
  const fs::path out = o.out.empty() ? fs::path("runs/train") : fs::path(o.out);
  echo_config(cfg, out);
  const TrainResult r = train(cfg, cfg.get("data.root"), out);
  std::cout << "trained " << r.iterations << " iterations, loss " << r.initial_loss << " -> "
            << r.final_loss << "\ncheckpoint " << r.checkpoint.string() << " ("
            << file_hash(r.checkpoint) << ")\nlog " << r.log.string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  const Config cfg = load_config(o, &ckpt.config_text);
  if (o.split != "train" && o.split != "val" && o.split != "test") {
    throw ConfigError("--split must be train, val or test");
  }
  const auto net = restore(cfg, ckpt);
  const auto samples = read_split(cfg.get("data.root"), o.split);
  const fs::path out = o.out.empty() ? fs::path(o.checkpoint).parent_path() : fs::path(o.out);
  echo_config(cfg, out);
  const Evaluation ev =
      evaluate(*net, samples, cfg.get_double("eval.beta2"), cfg.get_bool("eval.per_image"));
  MetricsReport report = ev.report;
  report.config_echo["checkpoint"] = file_hash(o.checkpoint);
  report.config_echo["split"] = o.split;
  write_text(out / ("metrics_" + o.split + ".json"), to_json(report) + "\n");
  write_text(out / ("metrics_" + o.split + ".csv"),
             csv_header(report) + "\n" + csv_row(report, o.split) + "\n");
  if (!ev.per_image.empty()) {
    std::string text = csv_header(ev.per_image.front().report) + "\n";
    for (const auto& img : ev.per_image) text += csv_row(img.report, img.id) + "\n";
    write_text(out / ("per_image_" + o.split + ".csv"), text);
  }
  std::cout << o.split << ": miou=" << report.miou << " miou_fg=" << report.miou_fg_only
            << " acc=" << report.acc << " mae=" << report.mae << " mber=" << report.mber
            << " f_beta=" << report.f_beta << "\n";
  return kExitOk;
}

int cmd_visualize(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("visualize needs --checkpoint");
  if (o.image.empty()) throw ConfigError("visualize needs --image");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  const Config cfg = load_config(o, &ckpt.config_text);
  const auto net = restore(cfg, ckpt);
  const Tensor<float> image = image_tensor(read_png(o.image));
  const fs::path out = o.out.empty() ? fs::path("viz") : fs::path(o.out);
  echo_config(cfg, out);
  const VisualizationSet vs = visualize(*net, image, fs::path(o.image).stem().string(), out);
  for (const auto& f : vs.files) std::cout << f.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const Config cfg = load_config(o);
  std::vector<Variant> variants;
  for (const auto& name : cfg.get_list("ablate.variants")) variants.push_back(parse_variant(name));
  if (variants.empty()) throw ConfigError("ablate.variants is empty");
  const fs::path out = o.out.empty() ? fs::path("runs/ablate") : fs::path(o.out);
  echo_config(cfg, out);
  const auto samples = read_split(cfg.get("data.root"), "train");
  const auto rows = run_ablation(cfg, variants, samples, out);
  const std::string table = ablation_table(rows);
  write_text(out / "ablation.csv", table);
  std::cout << table;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Glass-like object segmentation toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "key=value overrides, last wins");
    sub->add_option("--out", o.out, "output directory");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  CLI::App* tr = app.add_subcommand("train", "train on the dataset's train split");
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  CLI::App* viz = app.add_subcommand("visualize", "write attention, boundary and prediction maps");
  CLI::App* abl = app.add_subcommand("ablate", "train and compare architecture variants");
  for (CLI::App* s : {gen, tr, ev, viz, abl}) common(s);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  ev->add_option("--split", o.split, "train, val or test");
  viz->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  viz->add_option("--image", o.image, "input PNG")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (viz->parsed()) return cmd_visualize(o);
    return cmd_ablate(o);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "unexpected failure: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace rfenet
