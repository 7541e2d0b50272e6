#include "rfenet/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <thread>

#include <json.hpp>

#include "rfenet/png_io.hpp"

namespace rfenet {

namespace fs = std::filesystem;

ShapeFamily parse_shape_family(const std::string& name) {
  if (name == "rect") return ShapeFamily::rect;
  if (name == "ellipse") return ShapeFamily::ellipse;
  if (name == "polygon") return ShapeFamily::polygon;
  if (name == "mixed") return ShapeFamily::mixed;
  throw ConfigError("unknown shape family '" + name + "' (rect, ellipse, polygon, mixed)");
}

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::rect: return "rect";
    case ShapeFamily::ellipse: return "ellipse";
    case ShapeFamily::polygon: return "polygon";
    case ShapeFamily::mixed: return "mixed";
  }
  return "mixed";
}

void SceneSpec::validate() const {
  if (height < 32 || height % 32 != 0) {
    throw ConfigError("canvas height " + std::to_string(height) +
                      " must be >= 32 and divisible by 32");
  }
  if (width < 32 || width % 32 != 0) {
    throw ConfigError("canvas width " + std::to_string(width) +
                      " must be >= 32 and divisible by 32");
  }
  if (!(transparency_alpha >= 0.0 && transparency_alpha <= 1.0)) {
    throw ConfigError("transparency_alpha must lie in [0, 1]");
  }
  if (n_objects < 0) throw ConfigError("n_objects must be >= 0");
  if (n_classes < 2 || n_classes > 255) throw ConfigError("n_classes must be in [2, 255]");
  if (reflective_streaks < 0) throw ConfigError("reflective_streaks must be >= 0");
  if (boundary_thickness < 1) throw ConfigError("boundary thickness must be >= 1");
}

std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t index) {
  std::uint64_t z = base_seed * 0x9E3779B97F4A7C15ull + index + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<std::uint8_t> mask_to_boundary(const std::vector<int>& mask, int height, int width,
                                           int thickness) {
  if (thickness < 1) throw ConfigError("boundary thickness must be >= 1");
  if (mask.size() != std::size_t(height) * width) {
    throw ShapeError("mask_to_boundary: mask size does not match dims");
  }
  std::vector<std::uint8_t> edge(mask.size(), 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int v = mask[y * width + x];
      const bool t = (x > 0 && mask[y * width + x - 1] != v) ||
                     (x + 1 < width && mask[y * width + x + 1] != v) ||
                     (y > 0 && mask[(y - 1) * width + x] != v) ||
                     (y + 1 < height && mask[(y + 1) * width + x] != v);
      edge[y * width + x] = t ? 1 : 0;
    }
  }
  // Chebyshev dilation = separable square max filter.
  const int radius = (thickness + 1) / 2 - 1;
  if (radius == 0) return edge;
  std::vector<std::uint8_t> rows(edge.size(), 0), out(edge.size(), 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t m = 0;
      for (int d = std::max(0, x - radius); d <= std::min(width - 1, x + radius) && !m; ++d)
        m = edge[y * width + d];
      rows[y * width + x] = m;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t m = 0;
      for (int d = std::max(0, y - radius); d <= std::min(height - 1, y + radius) && !m; ++d)
        m = rows[d * width + x];
      out[y * width + x] = m;
    }
  }
  return out;
}

namespace {

using Color = std::array<float, 3>;

struct Box {
  int x0, y0, x1, y1;  // inclusive

  bool overlaps(const Box& o, int margin) const {
    return !(x1 + margin < o.x0 || o.x1 + margin < x0 || y1 + margin < o.y0 ||
             o.y1 + margin < y0);
  }
};

Color class_tint(int cls) {
  switch (cls) {
    case 1: return {0.55f, 0.78f, 0.98f};
    case 2: return {0.62f, 0.97f, 0.68f};
    default: {
      const float h = float(cls) * 0.61803f;
      return {0.5f + 0.45f * std::abs(std::sin(h * 6.0f)),
              0.5f + 0.45f * std::abs(std::sin(h * 6.0f + 2.0f)),
              0.5f + 0.45f * std::abs(std::sin(h * 6.0f + 4.0f))};
    }
  }
}

class Painter {
 public:
  explicit Painter(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

 private:
  std::mt19937_64 rng_;
};

/// Convex polygon test for vertices given counter-clockwise.
bool inside_convex(const std::vector<std::array<double, 2>>& poly, double px, double py) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    const double cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
    if (cross < 0) return false;
  }
  return true;
}

}  // namespace

GlassSample generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int H = spec.height, W = spec.width;
  Painter rng(spec.rng_seed);
  GlassSample s;
  s.height = H;
  s.width = W;
  s.mask.assign(std::size_t(H) * W, 0);

  // Background: base colour, linear gradient, oriented stripes and blobs.
  std::vector<Color> bg(std::size_t(H) * W);
  const Color base{float(rng.uniform(0.15, 0.6)), float(rng.uniform(0.15, 0.6)),
                   float(rng.uniform(0.15, 0.6))};
  const double gdir = rng.uniform(0, 2 * std::numbers::pi);
  const double gamp = rng.uniform(0.05, 0.25);
  const double sdir = rng.uniform(0, std::numbers::pi);
  const double sfreq = rng.uniform(0.15, 0.6);
  const double samp = rng.uniform(0.05, 0.2);
  struct Blob {
    double x, y, r;
    Color c;
  };
  std::vector<Blob> blobs(rng.integer(2, 5));
  for (auto& b : blobs) {
    b = {rng.uniform(0, W), rng.uniform(0, H), rng.uniform(W / 10.0, W / 4.0),
         {float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3)),
          float(rng.uniform(-0.3, 0.3))}};
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double u = (x * std::cos(gdir) + y * std::sin(gdir)) / std::max(H, W);
      const double stripe = std::sin((x * std::cos(sdir) + y * std::sin(sdir)) * sfreq);
      Color c;
      for (int k = 0; k < 3; ++k) {
        c[k] = base[k] + float(gamp * u + samp * stripe * (k == 1 ? 0.6 : 1.0));
      }
      for (const auto& b : blobs) {
        const double d2 = ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (b.r * b.r);
        const float wgt = float(std::exp(-d2));
        for (int k = 0; k < 3; ++k) c[k] += wgt * b.c[k];
      }
      bg[y * W + x] = c;
    }
  }

  // Object placement: bounding boxes kept two pixels apart so that every
  // object is its own connected component.
  std::vector<Box> placed;
  std::vector<int> classes;
  for (int obj = 0; obj < spec.n_objects; ++obj) {
    ShapeFamily family = spec.shape_family;
    if (family == ShapeFamily::mixed) family = ShapeFamily(rng.integer(0, 2));
    const int cls = 1 + rng.integer(0, spec.n_classes - 2);
    double scale = 1.0;
    Box box{};
    bool ok = false;
    for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
      if (attempt > 0 && attempt % 50 == 0) scale *= 0.75;
      const int rx = std::max(2, int(rng.uniform(W / 10.0, W / 4.5) * scale));
      const int ry = std::max(2, int(rng.uniform(H / 10.0, H / 4.5) * scale));
      if (2 * rx + 4 >= W || 2 * ry + 4 >= H) continue;
      const int cx = rng.integer(rx + 1, W - rx - 2);
      const int cy = rng.integer(ry + 1, H - ry - 2);
      box = {cx - rx, cy - ry, cx + rx, cy + ry};
      ok = std::none_of(placed.begin(), placed.end(),
                        [&](const Box& o) { return box.overlaps(o, 2); });
    }
    if (!ok) break;
    placed.push_back(box);
    classes.push_back(cls);

    const double cx = 0.5 * (box.x0 + box.x1 + 1), cy = 0.5 * (box.y0 + box.y1 + 1);
    const double rx = 0.5 * (box.x1 - box.x0 + 1), ry = 0.5 * (box.y1 - box.y0 + 1);
    std::vector<std::array<double, 2>> poly;
    if (family == ShapeFamily::polygon) {
      const int k = rng.integer(3, 7);
      std::vector<double> angles(k);
      for (auto& a : angles) a = rng.uniform(0, 2 * std::numbers::pi);
      std::sort(angles.begin(), angles.end());
      for (double a : angles) {
        const double r = rng.uniform(0.75, 1.0);
        poly.push_back({cx + r * rx * std::cos(a), cy + r * ry * std::sin(a)});
      }
    }
    bool any = false;
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        bool in = true;
        if (family == ShapeFamily::ellipse) {
          const double dx = (px - cx) / rx, dy = (py - cy) / ry;
          in = dx * dx + dy * dy <= 1.0;
        } else if (family == ShapeFamily::polygon) {
          in = inside_convex(poly, px, py);
        }
        if (in) {
          s.mask[y * W + x] = cls;
          any = true;
        }
      }
    }
    if (!any) s.mask[int(cy) * W + int(cx)] = cls;
  }

  // Glass appearance: refracted background blended with the class tint.
  std::vector<Color> img = bg;
  const double alpha = spec.transparency_alpha;
  for (std::size_t o = 0; o < placed.size(); ++o) {
    const Box& b = placed[o];
    const int cls = classes[o];
    const Color tint = class_tint(cls);
    const int ox = rng.integer(-3, 3), oy = rng.integer(-3, 3);
    for (int y = b.y0; y <= b.y1; ++y) {
      for (int x = b.x0; x <= b.x1; ++x) {
        if (s.mask[y * W + x] != cls) continue;
        const int sx = std::clamp(x + ox, 0, W - 1), sy = std::clamp(y + oy, 0, H - 1);
        for (int k = 0; k < 3; ++k) {
          img[y * W + x][k] =
              float(alpha * bg[sy * W + sx][k] + (1.0 - alpha) * tint[k]);
        }
      }
    }
  }
  // Reflective streaks: bright diagonal bands clipped to glass.
  for (int st = 0; st < spec.reflective_streaks && !placed.empty(); ++st) {
    const Box& b = placed[rng.integer(0, int(placed.size()) - 1)];
    const double c0 = rng.uniform(b.x0 + b.y0, b.x1 + b.y1);
    const double halfw = rng.uniform(0.5, 1.5);
    for (int y = b.y0; y <= b.y1; ++y) {
      for (int x = b.x0; x <= b.x1; ++x) {
        if (s.mask[y * W + x] == 0 || std::abs(x + y - c0) > halfw) continue;
        for (int k = 0; k < 3; ++k) img[y * W + x][k] += 0.6f * (1.0f - img[y * W + x][k]);
      }
    }
  }

  s.image.resize(3, Index(H) * W);
  for (int k = 0; k < 3; ++k) {
    for (Index j = 0; j < Index(H) * W; ++j) {
      // Quantize to 8 bits so the in-memory sample equals its PNG round trip.
      const float v = std::clamp(img[j][k], 0.0f, 1.0f);
      s.image(k, j) = std::round(v * 255.0f) / 255.0f;
    }
  }
  s.boundary = mask_to_boundary(s.mask, H, W, spec.boundary_thickness);
  char id[32];
  std::snprintf(id, sizeof id, "seed%016llx", static_cast<unsigned long long>(spec.rng_seed));
  s.id = id;
  return s;
}

std::vector<GlassSample> generate_dataset(const DatasetSpec& spec, int workers) {
  if (spec.count < 0) throw ConfigError("dataset count must be >= 0");
  if (spec.min_objects < 0 || spec.max_objects < spec.min_objects) {
    throw ConfigError("object count range is empty");
  }
  spec.scene.validate();
  std::vector<GlassSample> out(spec.count);
  auto job = [&](int first, int step) {
    for (int i = first; i < spec.count; i += step) {
      SceneSpec scene = spec.scene;
      scene.rng_seed = sample_seed(spec.seed, std::uint64_t(i));
      scene.n_objects =
          spec.min_objects + int(scene.rng_seed % std::uint64_t(spec.max_objects - spec.min_objects + 1));
      out[i] = generate_scene(scene);
      char id[16];
      std::snprintf(id, sizeof id, "s%06d", i);
      out[i].id = id;
    }
  };
  workers = std::max(1, std::min(workers, std::max(1, spec.count)));
  if (workers == 1) {
    job(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(job, t, workers);
    for (auto& t : pool) t.join();
  }
  return out;
}

std::size_t Manifest::count(const std::string& split) const {
  auto it = splits.find(split);
  return it == splits.end() ? 0 : it->second.size();
}

std::map<std::string, int> split_counts(int n, double train_fraction, double val_fraction) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0 + 1e-12) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  const int train = std::min(n, int(std::llround(n * train_fraction)));
  const int val = std::min(n - train, int(std::llround(n * val_fraction)));
  return {{"train", train}, {"val", val}, {"test", n - train - val}};
}

namespace {

const std::array<const char*, 3> kSplits{"train", "val", "test"};

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory (" + ec.message() + ")", p.string());
}

void write_sample(const fs::path& dir, const GlassSample& s) {
  Image8 rgb{s.height, s.width, 3, {}};
  rgb.pixels.resize(std::size_t(s.height) * s.width * 3);
  Image8 mask{s.height, s.width, 1, {}};
  mask.pixels.resize(std::size_t(s.height) * s.width);
  Image8 edge = mask;
  for (int j = 0; j < s.height * s.width; ++j) {
    for (int k = 0; k < 3; ++k) {
      rgb.pixels[j * 3 + k] =
          std::uint8_t(std::lround(std::clamp(s.image(k, j), 0.0f, 1.0f) * 255.0f));
    }
    if (s.mask[j] < 0 || s.mask[j] > 255) throw DataError("mask class id exceeds 8 bits");
    mask.pixels[j] = std::uint8_t(s.mask[j]);
    edge.pixels[j] = s.boundary[j] ? 255 : 0;
  }
  write_png(dir / "images" / (s.id + ".png"), rgb);
  write_png(dir / "masks" / (s.id + ".png"), mask);
  write_png(dir / "boundaries" / (s.id + ".png"), edge);
}

}  // namespace

Manifest write_dataset(const std::vector<GlassSample>& samples, const fs::path& root,
                       double train_fraction, double val_fraction, int n_classes,
                       int boundary_thickness) {
  Manifest m;
  m.n_classes = n_classes;
  m.boundary_thickness = boundary_thickness;
  m.generator_version = kGeneratorVersion;
  if (!samples.empty()) {
    m.height = samples.front().height;
    m.width = samples.front().width;
  }
  const auto counts = split_counts(int(samples.size()), train_fraction, val_fraction);
  ensure_dir(root);
  std::size_t next = 0;
  for (const char* split : kSplits) {
    auto& ids = m.splits[split];
    const int c = counts.at(split);
    if (c == 0) continue;
    const fs::path dir = root / split;
    for (const char* sub : {"images", "masks", "boundaries"}) ensure_dir(dir / sub);
    for (int i = 0; i < c; ++i, ++next) {
      write_sample(dir, samples[next]);
      ids.push_back(samples[next].id);
    }
  }

  nlohmann::json j;
  j["generator_version"] = m.generator_version;
  j["n_classes"] = m.n_classes;
  j["height"] = m.height;
  j["width"] = m.width;
  j["boundary_thickness"] = m.boundary_thickness;
  for (const char* split : kSplits) j["splits"][split] = m.splits[split];
  const fs::path path = root / "manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest", path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write manifest", path.string());
  return m;
}

Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest", path.string());
  nlohmann::json j;
  try {
    in >> j;
    Manifest m;
    m.generator_version = j.at("generator_version").get<std::string>();
    m.n_classes = j.at("n_classes").get<int>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.boundary_thickness = j.value("boundary_thickness", 8);
    for (const char* split : kSplits) {
      m.splits[split] = j.at("splits").value(split, std::vector<std::string>{});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
}

GlassSample read_sample(const fs::path& root, const std::string& split, const std::string& id) {
  const fs::path dir = root / split;
  const Image8 rgb = read_png(dir / "images" / (id + ".png"));
  const Image8 mask = read_png(dir / "masks" / (id + ".png"));
  const Image8 edge = read_png(dir / "boundaries" / (id + ".png"));
  if (rgb.channels != 3 || mask.channels != 1 || edge.channels != 1 ||
      mask.height != rgb.height || mask.width != rgb.width || edge.height != rgb.height ||
      edge.width != rgb.width) {
    throw DataError("sample " + id + ": image, mask and boundary disagree in shape");
  }
  GlassSample s;
  s.height = rgb.height;
  s.width = rgb.width;
  s.id = id;
  const int n = s.height * s.width;
  s.image.resize(3, n);
  s.mask.resize(n);
  s.boundary.resize(n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < 3; ++k) s.image(k, j) = float(rgb.pixels[j * 3 + k]) / 255.0f;
    s.mask[j] = mask.pixels[j];
    s.boundary[j] = edge.pixels[j] ? 1 : 0;
  }
  return s;
}

std::vector<GlassSample> read_split(const fs::path& root, const std::string& split) {
  if (std::find(kSplits.begin(), kSplits.end(), split) == kSplits.end()) {
    throw ConfigError("unknown split '" + split + "' (train, val, test)");
  }
  const Manifest m = read_manifest(root);
  if (!fs::is_directory(root / split)) {
    throw DataError("split directory missing: " + (root / split).string());
  }
  std::vector<GlassSample> out;
  for (const auto& id : m.splits.at(split)) out.push_back(read_sample(root, split, id));
  return out;
}

}  // namespace rfenet
