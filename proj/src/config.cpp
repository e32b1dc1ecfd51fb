#include "hcanet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

namespace hcanet::config {

namespace {

using pipeline::TrainConfig;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ArgumentError("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ArgumentError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ArgumentError("expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define HCANET_DOUBLE(key, member)                                                 \
  Field {                                                                          \
    key, [](TrainConfig& c, const std::string& v) { c.member = to_double(v); },    \
        [](const TrainConfig& c) { return fmt(c.member); }                         \
  }
#define HCANET_UINT(key, member)                                                   \
  Field {                                                                          \
    key, [](TrainConfig& c, const std::string& v) { c.member = to_uint(v); },      \
        [](const TrainConfig& c) { return std::to_string(c.member); }              \
  }
#define HCANET_BOOL(key, member)                                                   \
  Field {                                                                          \
    key, [](TrainConfig& c, const std::string& v) { c.member = to_bool(v); },      \
        [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); } \
  }
#define HCANET_STRING(key, member)                                                 \
  Field {                                                                          \
    key, [](TrainConfig& c, const std::string& v) { c.member = v; },               \
        [](const TrainConfig& c) { return c.member; }                              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      HCANET_DOUBLE("lambda_1", weights.lambda_1),
      HCANET_DOUBLE("lambda_2", weights.lambda_2),
      HCANET_DOUBLE("lambda_reg", weights.lambda_reg),
      HCANET_DOUBLE("lambda_vgg", weights.lambda_vgg),
      HCANET_DOUBLE("lambda_mask", weights.lambda_mask),
      HCANET_DOUBLE("lr", adam.lr),
      HCANET_DOUBLE("beta1", adam.beta1),
      HCANET_DOUBLE("beta2", adam.beta2),
      HCANET_DOUBLE("eps", adam.eps),
      HCANET_UINT("steps", steps),
      HCANET_UINT("batch", batch),
      HCANET_DOUBLE("decay_start", decay_start),
      HCANET_UINT("height", model.height),
      HCANET_UINT("width", model.width),
      HCANET_UINT("tps_k", model.tps_k),
      HCANET_UINT("feature_channels", model.features),
      HCANET_UINT("unet_depth", model.unet_depth),
      HCANET_UINT("unet_channels", model.unet_channels),
      HCANET_UINT("seed", seed),
      HCANET_BOOL("use_mask_term", use_mask_term),
      HCANET_BOOL("reg_gx_only", reg_gx_only),
      HCANET_UINT("perceptual_seed", perceptual_seed),
      HCANET_STRING("perceptual_weights", perceptual_weights),
      HCANET_UINT("checkpoint_every", checkpoint_every),
      HCANET_STRING("checkpoint_prefix", checkpoint_prefix),
  };
  return all;
}

#undef HCANET_DOUBLE
#undef HCANET_UINT
#undef HCANET_BOOL
#undef HCANET_STRING

}  // namespace

TrainConfig parse_train_config(std::istream& in, const std::string& source) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (!field) throw ArgumentError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ArgumentError(where + "duplicate key '" + key + "'");
    try {
      field->set(cfg, value);
    } catch (const ArgumentError& e) {
      throw ArgumentError(where + key + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  return parse_train_config(in, path);
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.get(cfg) << '\n';
  return out.str();
}

}  // namespace hcanet::config
