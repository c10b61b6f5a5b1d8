#include "mcf/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mcf {

namespace {

const std::vector<std::pair<std::string, std::string>>& schema() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"seed", "0"},
      {"model.num_classes", "19"},
      {"model.input_channels", "3"},
      {"model.width_multiplier", "1"},
      {"model.spatial_widths", "64,64,128"},
      {"model.backbone_widths", "64,128,256,512"},
      {"model.backbone_blocks", "2,2,2,2"},
      {"model.c_f", "0"},
      {"model.c_g", "128"},
      {"model.r", "4"},
      {"model.ffm_width", "256"},
      {"model.use_lgate", "true"},
      {"model.use_cffm", "true"},
      {"model.use_cfrm", "true"},
      {"model.use_adjust", "true"},
      {"model.cffm_prose_variant", "false"},
      {"train.batch_size", "4"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "1e-4"},
      {"train.lr", "2.5e-2"},
      {"train.power", "0.9"},
      {"train.warmup_factor", "0.1"},
      {"train.warmup_iters", "0"},
      {"train.max_iter", "500"},
      {"train.ohem.enabled", "true"},
      {"train.ohem.threshold", "0.7"},
      {"train.ohem.min_kept_fraction", "0.0625"},
      {"train.aug.enabled", "true"},
      {"train.aug.flip_p", "0.5"},
      {"train.aug.scales", "0.5,1.0,1.25,1.5,1.75"},
      {"train.aug.crop_h", "512"},
      {"train.aug.crop_w", "1024"},
      {"train.aug.color_jitter", "true"},
      {"data.dir", ""},
      {"data.num_images", "8"},
      {"data.image_size", "64"},
      {"data.min_shapes", "3"},
      {"data.max_shapes", "6"},
      {"data.noise", "0.05"},
      {"eval.exclude_background", "false"},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_integer(const std::string& key, const std::string& text) {
  Int value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("config key " + key + ": expected an integer, got '" + text + "'");
  }
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  double value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("config key " + key + ": expected a number, got '" + text + "'");
  }
  return value;
}

template <std::size_t N>
std::array<int, N> int_array(const RunConfig& cfg, const std::string& key) {
  const auto list = cfg.get_list(key);
  if (list.size() != N) {
    throw ConfigError("config key " + key + ": expected " + std::to_string(N) + " values");
  }
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (list[i] != std::floor(list[i])) throw ConfigError("config key " + key + ": expected integers");
    out[i] = static_cast<int>(list[i]);
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [key, value] : schema()) values_[key] = value;
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& entry : schema()) k.push_back(entry.first);
    return k;
  }();
  return keys;
}

RunConfig RunConfig::from_string(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw Error("cannot open config file: " + path.string());
  std::ostringstream text;
  text << file.rdbuf();
  return from_string(text.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnknownKeyError(key);
  it->second = value;
}

void RunConfig::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnknownKeyError(key);
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_integer<int>(key, get(key)); }

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_integer<std::uint64_t>(key, get(key));
}

double RunConfig::get_double(const std::string& key) const { return parse_double(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" + v + "'");
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

void RunConfig::apply_environment() {
  if (const char* seed = std::getenv("MCF_SEED"); seed != nullptr && *seed != '\0') {
    set("seed", seed);
  }
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.num_classes = get_int("model.num_classes");
  m.input_channels = get_int("model.input_channels");
  m.width_multiplier = get_double("model.width_multiplier");
  m.spatial_widths = int_array<3>(*this, "model.spatial_widths");
  m.backbone_widths = int_array<4>(*this, "model.backbone_widths");
  m.backbone_blocks = int_array<4>(*this, "model.backbone_blocks");
  m.fused_channels = get_int("model.c_f");
  m.gate_channels = get_int("model.c_g");
  m.reduction = get_int("model.r");
  m.ffm_width = get_int("model.ffm_width");
  m.use_lgate = get_bool("model.use_lgate");
  m.use_cffm = get_bool("model.use_cffm");
  m.use_cfrm = get_bool("model.use_cfrm");
  m.use_adjust = get_bool("model.use_adjust");
  m.cffm_prose_variant = get_bool("model.cffm_prose_variant");
  m.seed = get_u64("seed");
  m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = get_int("train.batch_size");
  t.momentum = get_double("train.momentum");
  t.weight_decay = get_double("train.weight_decay");
  t.lr_i = get_double("train.lr");
  t.power = get_double("train.power");
  t.warmup_factor = get_double("train.warmup_factor");
  t.warmup_iters = get_int("train.warmup_iters");
  t.max_iter = get_int("train.max_iter");
  t.ohem.enabled = get_bool("train.ohem.enabled");
  t.ohem.threshold = get_double("train.ohem.threshold");
  t.ohem.min_kept_fraction = get_double("train.ohem.min_kept_fraction");
  t.augmentation.enabled = get_bool("train.aug.enabled");
  t.augmentation.flip_p = get_double("train.aug.flip_p");
  t.augmentation.scales = get_list("train.aug.scales");
  t.augmentation.crop_h = get_int("train.aug.crop_h");
  t.augmentation.crop_w = get_int("train.aug.crop_w");
  t.augmentation.color_jitter = get_bool("train.aug.color_jitter");
  t.seed = get_u64("seed");
  t.validate();
  return t;
}

SynthDatasetSpec RunConfig::synth_spec() const {
  SynthDatasetSpec s;
  s.num_images = get_int("data.num_images");
  s.image_size = get_int("data.image_size");
  s.num_classes = get_int("model.num_classes");
  s.min_shapes = get_int("data.min_shapes");
  s.max_shapes = get_int("data.max_shapes");
  s.noise = get_double("data.noise");
  s.seed = get_u64("seed");
  s.validate();
  return s;
}

std::string RunConfig::to_string() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

}  // namespace mcf
