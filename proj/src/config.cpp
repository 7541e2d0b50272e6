#include "rfenet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace rfenet {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"data.root", "data", "dataset root directory"},
      {"data.n", "100", "number of synthetic samples"},
      {"data.seed", "1", "base seed of the scene generator"},
      {"data.height", "64", "canvas height, multiple of 32"},
      {"data.width", "64", "canvas width, multiple of 32"},
      {"data.n_classes", "3", "class count including background"},
      {"data.min_objects", "1", "minimum glass objects per scene"},
      {"data.max_objects", "3", "maximum glass objects per scene"},
      {"data.shape_family", "mixed", "rect | ellipse | polygon | mixed"},
      {"data.alpha", "0.6", "transparency: share of background visible through glass"},
      {"data.streaks", "2", "reflective streaks per scene"},
      {"data.thickness", "8", "boundary band width in pixels"},
      {"data.train_frac", "0.8", "fraction of samples in the train split"},
      {"data.val_frac", "0.1", "fraction of samples in the val split"},
      {"model.output_stride", "16", "encoder output stride: 8 or 16"},
      {"model.widths", "16,24,32,48,64", "encoder stage widths F1..F5"},
      {"model.context_block", "true", "atrous context block on F5"},
      {"model.norm", "group", "group | batch"},
      {"model.sme_width", "16", "working width of the cascade"},
      {"model.sme_fuse_kernel", "3", "kernel of the SME fuse conv"},
      {"model.sme_branch_kernels", "5,9", "kernels of the two SME branches"},
      {"model.sme_head_depth", "2", "3x3 convs before the attention output"},
      {"model.sme_blocks", "1", "mutual blocks per SME stage"},
      {"model.sar_k", "-1", "uncertain points per sample; -1 = ceil(h*w/16)"},
      {"model.sar_m", "-1", "boundary points per sample; -1 = min(64, h*w)"},
      {"model.sar_heads", "4", "attention heads"},
      {"model.sar_dk", "-1", "per-head key dim; -1 = width/heads"},
      {"model.feed_refined", "true", "next stage consumes the SAR output (else the SME output)"},
      {"loss.lambda_s", "0.01", "weight of the stage semantic losses"},
      {"loss.lambda_b", "0.25", "weight of the stage boundary losses"},
      {"loss.dice_smooth", "1", "Dice smoothing term"},
      {"train.base_lr", "0.04", "initial learning rate"},
      {"train.power", "0.9", "poly schedule power"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.weight_decay", "0.0001", "L2 weight decay"},
      {"train.epochs", "60", "training epochs"},
      {"train.batch_size", "4", "samples per iteration"},
      {"train.seed", "0", "seed for initialization and shuffling"},
      {"train.ablation", "full",
       "full | no_sme | no_sar | no_cascade | oneway_s2b | oneway_b2s | baseline"},
      {"train.max_iters", "0", "stop after this many iterations; 0 = no cap"},
      {"train.clip_norm", "10", "global gradient-norm clip; 0 disables"},
      {"train.checkpoint_every", "1", "write the checkpoint every N epochs"},
      {"eval.beta2", "0.3", "beta^2 of the F-measure"},
      {"eval.per_image", "false", "also write per-image IoU rows"},
      {"ablate.variants", "full,no_sar,baseline", "variants trained by the ablate command"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string valid_key_list() {
  std::string out;
  for (const auto& k : config_keys()) out += "\n  " + k.key;
  return out;
}

}  // namespace

Config::Config() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config c;
  c.parse(ss.str(), path.string());
  return c;
}

void Config::parse(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("unknown config key '" + key + "'; valid keys:" + valid_key_list());
  }
  it->second = value;
}

void Config::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
  }
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : get_list(key)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected integers, got '" + item + "'");
    }
  }
  return out;
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const auto& k : config_keys()) os << k.key << " = " << values_.at(k.key) << "\n";
  return os.str();
}

void Config::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config", path.string());
  out << to_text();
}

NetworkConfig network_config(const Config& cfg) {
  NetworkConfig n;
  n.n_classes = cfg.get_int("data.n_classes");
  n.encoder.output_stride = cfg.get_int("model.output_stride");
  const auto widths = cfg.get_int_list("model.widths");
  if (widths.size() != 5) throw ConfigError("model.widths needs 5 entries");
  std::copy(widths.begin(), widths.end(), n.encoder.widths.begin());
  n.encoder.context_block = cfg.get_bool("model.context_block");
  const std::string norm = cfg.get("model.norm");
  if (norm == "group") {
    n.encoder.norm = NormKind::group;
  } else if (norm == "batch") {
    n.encoder.norm = NormKind::batch;
  } else {
    throw ConfigError("model.norm must be group or batch");
  }
  n.sme.width = cfg.get_int("model.sme_width");
  n.sme.fuse_kernel = cfg.get_int("model.sme_fuse_kernel");
  const auto branches = cfg.get_int_list("model.sme_branch_kernels");
  if (branches.size() != 2) throw ConfigError("model.sme_branch_kernels needs 2 entries");
  n.sme.branch_kernels = {branches[0], branches[1]};
  n.sme.head_depth = cfg.get_int("model.sme_head_depth");
  n.sme.blocks = cfg.get_int("model.sme_blocks");
  n.sar.K = cfg.get_int("model.sar_k");
  n.sar.M = cfg.get_int("model.sar_m");
  n.sar.heads = cfg.get_int("model.sar_heads");
  n.sar.d_k = cfg.get_int("model.sar_dk");
  n.feed_refined = cfg.get_bool("model.feed_refined");
  n.variant = parse_variant(cfg.get("train.ablation"));
  n.validate();
  return n;
}

DatasetSpec dataset_spec(const Config& cfg) {
  DatasetSpec d;
  d.count = cfg.get_int("data.n");
  d.seed = cfg.get_u64("data.seed");
  d.scene.height = cfg.get_int("data.height");
  d.scene.width = cfg.get_int("data.width");
  d.scene.n_classes = cfg.get_int("data.n_classes");
  d.scene.shape_family = parse_shape_family(cfg.get("data.shape_family"));
  d.scene.transparency_alpha = cfg.get_double("data.alpha");
  d.scene.reflective_streaks = cfg.get_int("data.streaks");
  d.scene.boundary_thickness = cfg.get_int("data.thickness");
  d.min_objects = cfg.get_int("data.min_objects");
  d.max_objects = cfg.get_int("data.max_objects");
  d.train_fraction = cfg.get_double("data.train_frac");
  d.val_fraction = cfg.get_double("data.val_frac");
  d.scene.validate();
  return d;
}

LossConfig loss_config(const Config& cfg) {
  LossConfig l;
  l.lambda_s = cfg.get_double("loss.lambda_s");
  l.lambda_b = cfg.get_double("loss.lambda_b");
  l.dice_smooth = cfg.get_double("loss.dice_smooth");
  l.validate();
  return l;
}

}  // namespace rfenet
