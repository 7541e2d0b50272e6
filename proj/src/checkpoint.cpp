#include "rfenet/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

namespace rfenet {

namespace {

constexpr char kMagic[8] = {'R', 'F', 'E', 'N', 'E', 'T', 'C', 'K'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw CheckpointError("truncated checkpoint " + path);
  }
  return v;
}

std::string take_string(std::istream& is, const std::string& path) {
  const auto len = take<std::uint32_t>(is, path);
  if (len > (1u << 26)) throw CheckpointError("corrupt string length in " + path);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw CheckpointError("truncated checkpoint " + path);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params,
                     std::uint64_t architecture_hash, const std::string& config_text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint", tmp.string());
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, architecture_hash);
    put<std::uint32_t>(os, std::uint32_t(config_text.size()));
    os.write(config_text.data(), std::streamsize(config_text.size()));
    put<std::uint32_t>(os, std::uint32_t(params.size()));
    for (const auto& p : params) {
      put<std::uint32_t>(os, std::uint32_t(p->name.size()));
      os.write(p->name.data(), std::streamsize(p->name.size()));
      put<std::uint32_t>(os, std::uint32_t(p->value.rows()));
      put<std::uint32_t>(os, std::uint32_t(p->value.cols()));
      put<std::uint8_t>(os, p->trainable ? 1 : 0);
      os.write(reinterpret_cast<const char*>(p->value.data()),
               std::streamsize(p->value.size() * sizeof(float)));
    }
    if (!os) throw IoError("checkpoint write failed", tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place", path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint", path.string());
  const std::string where = path.string();
  char magic[8];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) {
    throw CheckpointError("not a checkpoint file: " + where);
  }
  Checkpoint c;
  c.version = take<std::uint32_t>(is, where);
  if (c.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(c.version));
  }
  c.architecture_hash = take<std::uint64_t>(is, where);
  c.config_text = take_string(is, where);
  const auto count = take<std::uint32_t>(is, where);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = take_string(is, where);
    const auto rows = take<std::uint32_t>(is, where);
    const auto cols = take<std::uint32_t>(is, where);
    e.trainable = take<std::uint8_t>(is, where) != 0;
    e.value.resize(rows, cols);
    if (!is.read(reinterpret_cast<char*>(e.value.data()),
                 std::streamsize(std::size_t(rows) * cols * sizeof(float)))) {
      throw CheckpointError("truncated checkpoint " + where);
    }
    c.entries.push_back(std::move(e));
  }
  return c;
}

void load_parameters(const Checkpoint& ckpt, ParameterSet<float>& params,
                     std::uint64_t expected_hash) {
  if (ckpt.architecture_hash != expected_hash) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "architecture hash mismatch: checkpoint %016llx, model %016llx",
                  static_cast<unsigned long long>(ckpt.architecture_hash),
                  static_cast<unsigned long long>(expected_hash));
    throw CheckpointError(buf);
  }
  if (ckpt.entries.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.entries.size()) +
                          " parameters, model has " + std::to_string(params.size()));
  }
  for (const auto& e : ckpt.entries) {
    Parameter<float>* p = params.find(e.name);
    if (!p) throw CheckpointError("model has no parameter " + e.name);
    if (p->value.rows() != e.value.rows() || p->value.cols() != e.value.cols()) {
      throw CheckpointError("shape mismatch for " + e.name);
    }
    p->value = e.value;
  }
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read", path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::istreambuf_iterator<char> it(is), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rfenet
