#include "bsplc/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "bsplc/random.hpp"

namespace bsplc {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) || std::memcmp(bytes.data() + 8, "WAVE", 4))
    throw AudioError(where + "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* ck = bytes.data() + pos;
    const std::uint32_t len = le32(ck + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (!std::memcmp(ck, "fmt ", 4)) {
      if (avail < 16) throw AudioError(where + "truncated fmt chunk");
      format = le16(ck + 8);
      channels = le16(ck + 10);
      rate = le32(ck + 12);
      bits = le16(ck + 22);
      if (format == kFormatExtensible && avail >= 26) format = le16(ck + 32);
      have_fmt = true;
    } else if (!std::memcmp(ck, "data", 4)) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data == nullptr) throw AudioError(where + "missing fmt or data chunk");
  if (channels != 1) throw AudioError(where + "expected mono audio, got " + std::to_string(channels) + " channels");
  if (rate != static_cast<std::uint32_t>(kSampleRate))
    throw AudioError(where + "sample rate " + std::to_string(rate) + " Hz, resample required (expected 48000 Hz)");

  Waveform w;
  if (format == kFormatPcm && bits == 16) {
    w.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = static_cast<std::int16_t>(le16(data + 2 * i)) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    w.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      const std::uint32_t u = le32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      w.samples[i] = f;
    }
  } else {
    throw AudioError(where + "unsupported sample format (need 16-bit PCM or 32-bit float)");
  }
  validate(w);
  return w;
}

void validate(const Waveform& wave) {
  if (wave.sample_rate != kSampleRate)
    throw AudioError("sample rate " + std::to_string(wave.sample_rate) + " Hz, resample required");
  if (wave.samples.empty()) throw AudioError("empty waveform");
  for (double v : wave.samples)
    if (!std::isfinite(v)) throw AudioError("non-finite sample in waveform");
}

void write_wav(const std::filesystem::path& path, const Waveform& wave, PcmFormat format) {
  validate(wave);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw AudioError("cannot write " + path.string());
  const std::uint16_t bits = format == PcmFormat::kInt16 ? 16 : 32;
  const std::uint32_t bytes_per_sample = bits / 8;
  const std::uint32_t data_len = static_cast<std::uint32_t>(wave.samples.size() * bytes_per_sample);
  os.write("RIFF", 4);
  put32(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put32(os, 16);
  put16(os, format == PcmFormat::kInt16 ? kFormatPcm : kFormatFloat);
  put16(os, 1);
  put32(os, kSampleRate);
  put32(os, kSampleRate * bytes_per_sample);
  put16(os, static_cast<std::uint16_t>(bytes_per_sample));
  put16(os, bits);
  os.write("data", 4);
  put32(os, data_len);
  if (format == PcmFormat::kInt16) {
    for (double v : wave.samples) {
      const double q = std::round(std::clamp(v, -1.0, 1.0) * 32768.0);
      put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
    }
  } else {
    for (double v : wave.samples) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put32(os, u);
    }
  }
  if (!os) throw AudioError("write failed: " + path.string());
}

Waveform cut_segment(const Waveform& wave, std::int64_t start, std::int64_t length) {
  if (start < 0 || length <= 0 || start + length > static_cast<std::int64_t>(wave.samples.size()))
    throw AudioError("segment [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside waveform of " + std::to_string(wave.samples.size()) + " samples");
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.assign(wave.samples.begin() + start, wave.samples.begin() + start + length);
  return out;
}

std::vector<ManifestEntry> CorpusManifest::subset(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

CorpusManifest build_manifest(const std::filesystem::path& root, double segment_seconds, double valid_fraction,
                              std::uint64_t seed) {
  if (!(valid_fraction >= 0.0 && valid_fraction <= 1.0)) throw AudioError("valid_fraction must be in [0, 1]");
  const auto seg_len = static_cast<std::int64_t>(std::llround(segment_seconds * kSampleRate));
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(root))
    for (const auto& de : std::filesystem::recursive_directory_iterator(root)) {
      if (!de.is_regular_file()) continue;
      std::string ext = de.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".wav") files.push_back(de.path());
    }
  std::sort(files.begin(), files.end());

  CorpusManifest m;
  for (const auto& f : files) {
    Waveform w;
    try {
      w = read_wav(f);
    } catch (const AudioError&) {
      continue;
    }
    if (static_cast<std::int64_t>(w.samples.size()) < seg_len) continue;
    m.entries.push_back({f.string(), static_cast<std::int64_t>(w.samples.size()), Split::kTrain});
  }
  if (m.entries.empty()) throw AudioError("empty corpus: no usable 48 kHz mono WAV of at least one segment under " +
                                          root.string());

  std::vector<std::size_t> order(m.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_valid = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(order.size())));
  for (std::size_t i = 0; i < n_valid; ++i) m.entries[order[i]].split = Split::kValid;
  return m;
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream os(path);
  if (!os) throw AudioError("cannot write " + path.string());
  for (const auto& e : manifest.entries)
    os << e.path << '\t' << e.num_samples << '\t' << (e.split == Split::kTrain ? "train" : "valid") << '\n';
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AudioError("cannot open " + path.string());
  CorpusManifest m;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string p, n, s;
    if (!std::getline(ls, p, '\t') || !std::getline(ls, n, '\t') || !std::getline(ls, s))
      throw AudioError(path.string() + ":" + std::to_string(lineno) + ": malformed manifest line");
    if (s != "train" && s != "valid")
      throw AudioError(path.string() + ":" + std::to_string(lineno) + ": bad split tag '" + s + "'");
    if (!seen.insert(p).second) throw AudioError(path.string() + ":" + std::to_string(lineno) + ": duplicate path");
    m.entries.push_back({p, std::stoll(n), s == "train" ? Split::kTrain : Split::kValid});
  }
  return m;
}

}  // namespace bsplc
