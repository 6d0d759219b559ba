#include "bsplc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "bsplc/config.hpp"

namespace bsplc {

namespace {

constexpr char kMagic[8] = {'B', 'S', 'P', 'L', 'C', 'K', 'P', 'T'};
constexpr const char* kGenPrefix = "gen/";

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    u64(v);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  std::vector<unsigned char> buf;
};

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n, std::string src) : p_(p), n_(n), src_(std::move(src)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() {
    const std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  void need(std::size_t k) const {
    if (pos_ + k > n_) throw CheckpointError(src_ + ": truncated checkpoint");
  }
  std::size_t pos() const { return pos_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string src_;
};

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  Writer w;
  w.buf.insert(w.buf.end(), kMagic, kMagic + 8);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values) w.f64(v);
  }
  w.u64(fnv1a(w.buf.data(), w.buf.size()));
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
    os.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!os) throw CheckpointError("write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string src = path.string();
  if (bytes.size() < 8 + 4 + 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw CheckpointError(src + ": not a checkpoint (bad magic)");
  Reader r(bytes.data() + 8, bytes.size() - 8, src);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(src + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  Reader tail(bytes.data() + bytes.size() - 8, 8, src);
  if (tail.u64() != fnv1a(bytes.data(), bytes.size() - 8))
    throw CheckpointError(src + ": corrupt checkpoint version " + std::to_string(version) + " (checksum mismatch)");
  Checkpoint ck;
  const std::uint32_t nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    ck.meta[k] = r.str();
  }
  const std::uint32_t ntensors = r.u32();
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    Tensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    r.need(n * 8);
    t.values.resize(n);
    for (auto& v : t.values) v = r.f64();
    ck.tensors.push_back(std::move(t));
  }
  if (r.pos() + 8 + 8 != bytes.size()) throw CheckpointError(src + ": trailing bytes in checkpoint");
  return ck;
}

const Checkpoint::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void Checkpoint::add_params(const nn::ParamSet& ps, const std::string& prefix) {
  for (const auto& e : ps.entries()) tensors.push_back({prefix + e.name, e.var.shape(), e.var.value()});
}

void Checkpoint::restore_params(nn::ParamSet& ps, const std::string& prefix) const {
  for (const auto& e : ps.entries()) {
    const Tensor* t = find(prefix + e.name);
    if (!t) throw CheckpointError("checkpoint lacks tensor " + prefix + e.name);
    if (t->shape != e.var.shape())
      throw CheckpointError("tensor " + prefix + e.name + " has shape " + ad::shape_str(t->shape) + ", model expects " +
                            ad::shape_str(e.var.shape()));
    e.var.node()->value = t->values;
  }
}

void save_generator(const std::filesystem::path& path, const Generator& g) {
  Checkpoint ck;
  ck.meta["kind"] = "generator";
  ck.meta["generator_config"] = g.config().describe();
  ck.add_params(g.params(), kGenPrefix);
  ck.save(path);
}

Generator generator_from_checkpoint(const Checkpoint& ck) {
  const auto it = ck.meta.find("generator_config");
  if (it == ck.meta.end()) throw CheckpointError("checkpoint has no generator configuration");
  GeneratorConfig cfg;
  try {
    cfg = generator_config_from(ConfigFile::parse(it->second, "checkpoint generator_config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint generator configuration is invalid: ") + e.what());
  }
  Generator g(cfg, 0);
  ck.restore_params(g.params(), kGenPrefix);
  return g;
}

Generator load_generator(const std::filesystem::path& path) { return generator_from_checkpoint(Checkpoint::load(path)); }

void load_generator_into(const std::filesystem::path& path, Generator& g) {
  const Checkpoint ck = Checkpoint::load(path);
  const auto it = ck.meta.find("generator_config");
  if (it == ck.meta.end()) throw CheckpointError(path.string() + ": no generator configuration");
  if (it->second != g.config().describe())
    throw CheckpointError(path.string() + ": checkpoint configuration does not match the model:\n" + it->second);
  ck.restore_params(g.params(), kGenPrefix);
}

}  // namespace bsplc
