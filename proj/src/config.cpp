#include "partmotion/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace partmotion {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::defaults() {
  Config c;
  auto& v = c.values_;
  // data / partition
  v["layout"] = "joints3d-v1";
  v["scheme_file"] = "";
  v["min_frames"] = "40";
  v["max_frames"] = "196";
  // per-part codec
  v["codebook_size"] = "512";
  v["code_dim"] = "128";
  v["code_dim_root"] = "64";
  v["downsample"] = "4";
  v["codec_width"] = "128";
  v["codec_width_root"] = "64";
  v["codec_res_blocks"] = "2";
  v["commitment_weight"] = "1.0";
  v["velocity_loss_weight"] = "0.5";
  v["dead_code_window"] = "256";
  v["dead_code_threshold"] = "1";
  // part-coordinated generator
  v["layers"] = "14";
  v["model_dim"] = "256";
  v["heads"] = "4";
  v["dropout"] = "0.1";
  v["coordination"] = "on";
  v["max_tokens"] = "49";
  v["text_dim"] = "64";
  v["text_hash_buckets"] = "1024";
  // stage-1 optimization
  v["vq_lr"] = "2e-4";
  v["vq_lr_drop_step"] = "3000";
  v["vq_lr_final"] = "1e-5";
  v["vq_beta1"] = "0.9";
  v["vq_beta2"] = "0.99";
  v["vq_batch_size"] = "256";
  v["vq_total_steps"] = "5000";
  // stage-2 optimization
  v["gen_lr"] = "1e-4";
  v["gen_lr_drop_step"] = "3000";
  v["gen_lr_final"] = "5e-6";
  v["gen_beta1"] = "0.5";
  v["gen_beta2"] = "0.99";
  v["gen_batch_size"] = "128";
  v["gen_total_steps"] = "5000";
  // shared optimization
  v["weight_decay"] = "0.0";
  v["grad_clip"] = "1.0";
  // input augmentation (stage 2)
  v["token_corrupt_prob"] = "0.1";
  v["part_mask_prob"] = "0.15";
  // feature extractor
  v["feature_dim"] = "64";
  v["ext_lr"] = "1e-3";
  v["ext_total_steps"] = "2000";
  v["ext_batch_size"] = "32";
  v["ext_margin"] = "0.5";
  // evaluation protocol
  v["eval_every"] = "1000";
  v["eval_repeats"] = "20";
  v["mmodality_repeats"] = "5";
  v["diversity_subset"] = "300";
  v["seed"] = "0";
  return c;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  it->second = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

int Config::get_int(const std::string& key) const {
  const std::string& s = get(key);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("config key " + key + ": expected integer, got '" + s + "'");
  return v;
}

double Config::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected number, got '" + s + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key " + key + ": expected on/off, got '" + s + "'");
}

std::string Config::resolved_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

void Config::write_resolved(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << resolved_text();
}

}  // namespace partmotion
