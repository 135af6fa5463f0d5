#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "mpa/error.hpp"
#include "mpa/toydata.hpp"
#include "mpa/training.hpp"

// Flat key=value training configuration. '#' starts a comment, blank lines
// are skipped, unknown keys are rejected so typos fail loudly.

namespace mpa {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long out = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " wants an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " wants a number, got '" + v + "'");
  }
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    unsigned long long out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " wants an unsigned integer, got '" + v + "'");
  }
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + " has no key");

    if (key == "stage") cfg.stage = int(to_long(key, val));
    else if (key == "task") cfg.task = val;
    else if (key == "model") cfg.model = val;
    else if (key == "steps") cfg.steps = to_long(key, val);
    else if (key == "batch") cfg.batch = int(to_long(key, val));
    else if (key == "crop") cfg.crop = int(to_long(key, val));
    else if (key == "lr") cfg.lr = to_double(key, val);
    else if (key == "seed") cfg.seed = to_seed(key, val);
    else if (key == "data") cfg.data = val;
    else if (key == "dataset") cfg.dataset = val;
    else if (key == "data_count") cfg.data_count = int(to_long(key, val));
    else if (key == "data_size") cfg.data_size = int(to_long(key, val));
    else if (key == "holdout") cfg.holdout = int(to_long(key, val));
    else if (key == "eval_interval") cfg.eval_interval = to_long(key, val);
    else if (key == "base_checkpoint") cfg.base_checkpoint = val;
    else if (key == "out_checkpoint") cfg.out_checkpoint = val;
    else if (key == "task_model") cfg.task_model = val;
    else if (key == "metrics") cfg.metrics = val;
    else throw ConfigError("unknown config key: " + key);
  }
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_train_config(buf.str());
}

void validate_train_config(TrainConfig& cfg) {
  if (cfg.stage != 1 && cfg.stage != 2)
    throw ConfigError("stage must be 1 or 2, got " + std::to_string(cfg.stage));
  task_from_name(cfg.task);             // rejects unknown names
  model_config_from_name(cfg.model);

  if (cfg.steps <= 0) cfg.steps = cfg.stage == 1 ? 20000 : 2000;
  if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
  if (cfg.lr <= 0) throw ConfigError("lr must be > 0");
  if (cfg.data_count < cfg.batch) throw ConfigError("data_count smaller than batch");
  if (cfg.holdout < 1) throw ConfigError("holdout must be >= 1");

  if (cfg.data_size == 0) cfg.data_size = cfg.stage == 1 ? 64 : 32;
  if (cfg.data_size % 16 != 0 || cfg.data_size < 16)
    throw ConfigError("data_size must be a positive multiple of 16");
  if (cfg.crop == 0) cfg.crop = 32;
  if (cfg.crop % 16 != 0 || cfg.crop < 16)
    throw ConfigError("crop must be a positive multiple of 16");
  if (cfg.dataset.empty() && cfg.crop > cfg.data_size)
    throw ConfigError("crop larger than generated images");

  if (cfg.eval_interval <= 0) cfg.eval_interval = std::max(1L, cfg.steps / 10);
  if (cfg.data.empty()) {
    if (cfg.stage == 1) cfg.data = "texture";
    else cfg.data = toy_kind_name(toy_kind_from_name(cfg.task));
  } else {
    toy_kind_from_name(cfg.data);       // rejects unknown names
  }

  if (cfg.stage == 2 && cfg.base_checkpoint.empty())
    throw ConfigError("stage 2 requires base_checkpoint from a stage 1 run");
}

}  // namespace mpa
