#include "bsplc/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace bsplc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  return true;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& source) {
  ConfigFile cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (!valid_key(e.key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": invalid key '" + e.key + "'");
    if (e.value.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": missing value for '" + e.key + "'");
    for (const auto& prev : cfg.entries_)
      if (prev.key == e.key)
        throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + e.key + "' (first on line " +
                          std::to_string(prev.line) + ")");
    cfg.entries_.push_back(std::move(e));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const ConfigFile::Entry* ConfigFile::find(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.key == key) {
      e.used = true;
      return &e;
    }
  return nullptr;
}

void ConfigFile::fail(const Entry& e, const std::string& what) const {
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": " + e.key + ": " + what);
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  long long v = 0;
  const auto [p, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
  if (ec != std::errc() || p != e->value.data() + e->value.size()) fail(*e, "expected an integer, got '" + e->value + "'");
  return v;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(e->value, &pos);
    if (pos != e->value.size()) fail(*e, "expected a number, got '" + e->value + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(*e, "expected a number, got '" + e->value + "'");
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1") return true;
  if (e->value == "false" || e->value == "0") return false;
  fail(*e, "expected true or false, got '" + e->value + "'");
}

std::vector<int> ConfigFile::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<int> out;
  std::stringstream ss(e->value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size())
      fail(*e, "expected a comma-separated integer list, got '" + e->value + "'");
    out.push_back(v);
  }
  return out;
}

void ConfigFile::reject_unused() const {
  for (const auto& e : entries_)
    if (!e.used) fail(e, "unknown key");
}

GeneratorConfig generator_config_from(const ConfigFile& cfg) {
  GeneratorConfig g;
  try {
    g = GeneratorConfig::preset_named(cfg.get_string("preset", "toy"));
  } catch (const std::invalid_argument& err) {
    throw ConfigError(cfg.source() + ": " + err.what());
  }
  auto four = [&](const char* key, std::array<int, 4>& dst) {
    const auto v = cfg.get_int_list(key, {dst.begin(), dst.end()});
    if (v.size() != 4) throw ConfigError(cfg.source() + ": " + key + " needs exactly 4 values");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  four("encoder_channels", g.encoder_channels);
  four("freq_strides", g.freq_strides);
  four("tfdcm_dilations", g.tfdcm_dilations);
  g.ftlstm_hidden = static_cast<int>(cfg.get_int("ftlstm_hidden", g.ftlstm_hidden));
  g.highband_channels = static_cast<int>(cfg.get_int("highband_channels", g.highband_channels));
  g.highband_gru_hidden = static_cast<int>(cfg.get_int("highband_gru_hidden", g.highband_gru_hidden));
  g.f0_head_hidden = static_cast<int>(cfg.get_int("f0_head_hidden", g.f0_head_hidden));
  g.include_loss_flag_input = cfg.get_bool("include_loss_flag_input", g.include_loss_flag_input);
  try {
    g.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(cfg.source() + ": " + err.what());
  }
  return g;
}

}  // namespace bsplc
