#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adaptct/agent.hpp"
#include "adaptct/env.hpp"
#include "adaptct/phantoms.hpp"
#include "adaptct/projector.hpp"
#include "adaptct/recon.hpp"
#include "adaptct/trainer.hpp"

namespace adaptct {

/// Raised for keys the config schema does not know; key() names it.
class UnknownKeyError : public ConfigError {
 public:
  explicit UnknownKeyError(std::string key)
      : ConfigError("unknown config key '" + key + "'"), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

inline constexpr int kConfigVersion = 1;

/// Every experiment knob. Text form: one `key = value` per line, '#'
/// starts a comment, `version = 1` is required.
struct RunConfig {
  struct Data {
    std::vector<ShapeKind> kinds{ShapeKind::ellipse};
    int train_count = 3000;
    int test_count = 100;
    int image_size = 128;
    std::uint64_t seed = 1;
    std::uint64_t test_seed = 2;
    bool test_ood = true;  // test rotations at grid midpoints
    double scale_min = 0.25, scale_max = 0.40;
    double shift_min = -0.10, shift_max = 0.10;
    double ellipse_aspect = 0.5;
    double rotation_step = 5.0;
    std::string train_path = "train.ctph";
    std::string test_path = "test.ctph";
  } data;
  int detector_count = 0;  // 0: ceil(1.5 * image_size)
  ReconConfig recon;
  struct Env {
    int horizon = 3;
    double noise_level = 0.0;
    RewardMode reward_mode = RewardMode::end_to_end;
    bool mask_repeats = false;
  } env;
  AgentConfig net;
  struct Train {
    int episodes = 1000;
    double gamma = 0.99;
    double actor_weight = 1.0;
    double critic_weight = 0.5;
    double entropy_weight = 0.01;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    std::uint64_t seed = 7;
    int checkpoint_every = 0;
    bool episode_log = false;
  } train;
  struct Eval {
    std::uint64_t seed = 11;
    bool sampled = true;  // also report the sampling learned policy
    int workers = 1;
    bool noise_matched = true;  // "matched" reuses env.noise_level
    double noise_level = 0.0;
    std::vector<int> horizons{3};
  } eval;

  Geometry geometry() const {
    Geometry g = Geometry::for_image(data.image_size);
    if (detector_count > 0) g.detector_count = detector_count;
    g.validate();
    return g;
  }

  std::vector<double> rotation_grid() const {
    std::vector<double> grid;
    for (int k = 0; k * data.rotation_step < 180.0 - 1e-9; ++k) grid.push_back(k * data.rotation_step);
    return grid;
  }

  DatasetSpec train_dataset() const {
    DatasetSpec s;
    s.shape_kinds = data.kinds;
    s.count = data.train_count;
    s.rotation_grid = rotation_grid();
    s.scale_range = {data.scale_min, data.scale_max};
    s.shift_range = {data.shift_min, data.shift_max};
    s.ellipse_aspect = data.ellipse_aspect;
    s.image_size = data.image_size;
    s.seed = data.seed;
    return s;
  }

  DatasetSpec test_dataset() const {
    DatasetSpec s = train_dataset();
    s.count = data.test_count;
    s.seed = data.test_seed;
    if (data.test_ood) s.rotation_grid = ood_rotation_split(s.rotation_grid);
    return s;
  }

  AgentConfig agent_config() const {
    AgentConfig a = net;
    a.image_size = data.image_size;
    return a;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.gamma = train.gamma;
    t.actor_weight = train.actor_weight;
    t.critic_weight = train.critic_weight;
    t.entropy_weight = train.entropy_weight;
    t.lr = train.lr;
    t.weight_decay = train.weight_decay;
    t.episodes = train.episodes;
    t.horizon = env.horizon;
    t.reward_mode = env.reward_mode;
    t.noise_level = env.noise_level;
    t.mask_repeats = env.mask_repeats;
    t.seed = train.seed;
    return t;
  }

  double eval_noise_level() const { return eval.noise_matched ? env.noise_level : eval.noise_level; }

  void validate() const {
    if (data.kinds.empty()) throw ConfigError("data.kinds must not be empty");
    if (data.train_count < 1 || data.test_count < 1) throw ConfigError("data counts must be >= 1");
    if (!(data.rotation_step > 0.0 && data.rotation_step <= 180.0)) throw ConfigError("data.rotation_step must lie in (0,180]");
    if (!(data.scale_min > 0.0 && data.scale_min <= data.scale_max && data.scale_max <= 1.0))
      throw ConfigError("data.scale_min/scale_max must satisfy 0 < min <= max <= 1");
    if (!(data.shift_min <= data.shift_max)) throw ConfigError("data.shift_min must not exceed data.shift_max");
    if (!(data.ellipse_aspect > 0.0 && data.ellipse_aspect <= 1.0)) throw ConfigError("data.ellipse_aspect must lie in (0,1]");
    if (detector_count < 0) throw ConfigError("projector.detector_count must be >= 0");
    geometry();
    recon.validate();
    agent_config().validate();
    train_config().validate();
    if (train.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (eval.workers < 1) throw ConfigError("eval.workers must be >= 1");
    if (!(eval.noise_level >= 0.0)) throw ConfigError("eval.noise_level must be >= 0");
    if (eval.horizons.empty()) throw ConfigError("eval.horizons must not be empty");
    for (int m : eval.horizons)
      if (m < 1 || m > kAngleCount) throw ConfigError("eval.horizons entries must lie in [1,180]");
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    std::string item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, std::string_view text) {
  T v{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ConfigError("config key '" + key + "': cannot parse '" + std::string(text) + "'");
  return v;
}

inline bool parse_bool(const std::string& key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + std::string(text) + "'");
}

inline std::string real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ADAPTCT_INT_FIELD(KEY, EXPR, TYPE)                                                                   \
  Field {                                                                                                    \
    KEY, [](RunConfig& c, const std::string& v) { EXPR = parse_number<TYPE>(KEY, v); },                      \
        [](const RunConfig& c) { return std::to_string(EXPR); }                                              \
  }
#define ADAPTCT_REAL_FIELD(KEY, EXPR)                                                                        \
  Field {                                                                                                    \
    KEY, [](RunConfig& c, const std::string& v) { EXPR = parse_number<double>(KEY, v); },                    \
        [](const RunConfig& c) { return real(EXPR); }                                                        \
  }
#define ADAPTCT_BOOL_FIELD(KEY, EXPR)                                                                        \
  Field {                                                                                                    \
    KEY, [](RunConfig& c, const std::string& v) { EXPR = parse_bool(KEY, v); },                              \
        [](const RunConfig& c) { return std::string(EXPR ? "true" : "false"); }                              \
  }
#define ADAPTCT_STRING_FIELD(KEY, EXPR)                                                                      \
  Field {                                                                                                    \
    KEY, [](RunConfig& c, const std::string& v) { EXPR = v; }, [](const RunConfig& c) { return EXPR; }       \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"data.kinds",
       [](RunConfig& c, const std::string& v) {
         c.data.kinds.clear();
         for (const auto& item : split_list(v)) {
           try {
             c.data.kinds.push_back(parse_shape_kind(item));
           } catch (const std::exception&) {
             throw ConfigError("config key 'data.kinds': unknown shape '" + item + "'");
           }
         }
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.data.kinds.size(); ++i) s += (i ? "," : "") + std::string(to_string(c.data.kinds[i]));
         return s;
       }},
      ADAPTCT_INT_FIELD("data.train_count", c.data.train_count, int),
      ADAPTCT_INT_FIELD("data.test_count", c.data.test_count, int),
      ADAPTCT_INT_FIELD("data.image_size", c.data.image_size, int),
      ADAPTCT_INT_FIELD("data.seed", c.data.seed, std::uint64_t),
      ADAPTCT_INT_FIELD("data.test_seed", c.data.test_seed, std::uint64_t),
      ADAPTCT_BOOL_FIELD("data.test_ood", c.data.test_ood),
      ADAPTCT_REAL_FIELD("data.scale_min", c.data.scale_min),
      ADAPTCT_REAL_FIELD("data.scale_max", c.data.scale_max),
      ADAPTCT_REAL_FIELD("data.shift_min", c.data.shift_min),
      ADAPTCT_REAL_FIELD("data.shift_max", c.data.shift_max),
      ADAPTCT_REAL_FIELD("data.ellipse_aspect", c.data.ellipse_aspect),
      ADAPTCT_REAL_FIELD("data.rotation_step", c.data.rotation_step),
      ADAPTCT_STRING_FIELD("data.train_path", c.data.train_path),
      ADAPTCT_STRING_FIELD("data.test_path", c.data.test_path),
      ADAPTCT_INT_FIELD("projector.detector_count", c.detector_count, int),
      ADAPTCT_INT_FIELD("recon.iterations", c.recon.iterations, int),
      ADAPTCT_BOOL_FIELD("recon.warm_start", c.recon.warm_start),
      ADAPTCT_INT_FIELD("env.horizon", c.env.horizon, int),
      ADAPTCT_REAL_FIELD("env.noise_level", c.env.noise_level),
      {"env.reward_mode", [](RunConfig& c, const std::string& v) { c.env.reward_mode = parse_reward_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.env.reward_mode)); }},
      ADAPTCT_BOOL_FIELD("env.mask_repeats", c.env.mask_repeats),
      {"net.channels",
       [](RunConfig& c, const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 3) throw ConfigError("config key 'net.channels': expected three comma-separated widths");
         for (int i = 0; i < 3; ++i) c.net.channels[i] = parse_number<int>("net.channels", items[i]);
       },
       [](const RunConfig& c) {
         return std::to_string(c.net.channels[0]) + "," + std::to_string(c.net.channels[1]) + "," +
                std::to_string(c.net.channels[2]);
       }},
      ADAPTCT_INT_FIELD("net.groups", c.net.groups, int),
      ADAPTCT_INT_FIELD("net.hidden", c.net.hidden, int),
      ADAPTCT_REAL_FIELD("net.leaky_slope", c.net.leaky_slope),
      ADAPTCT_INT_FIELD("train.episodes", c.train.episodes, int),
      ADAPTCT_REAL_FIELD("train.gamma", c.train.gamma),
      ADAPTCT_REAL_FIELD("train.actor_weight", c.train.actor_weight),
      ADAPTCT_REAL_FIELD("train.critic_weight", c.train.critic_weight),
      ADAPTCT_REAL_FIELD("train.entropy_weight", c.train.entropy_weight),
      ADAPTCT_REAL_FIELD("train.lr", c.train.lr),
      ADAPTCT_REAL_FIELD("train.weight_decay", c.train.weight_decay),
      ADAPTCT_INT_FIELD("train.seed", c.train.seed, std::uint64_t),
      ADAPTCT_INT_FIELD("train.checkpoint_every", c.train.checkpoint_every, int),
      ADAPTCT_BOOL_FIELD("train.episode_log", c.train.episode_log),
      ADAPTCT_INT_FIELD("eval.seed", c.eval.seed, std::uint64_t),
      ADAPTCT_BOOL_FIELD("eval.sampled", c.eval.sampled),
      ADAPTCT_INT_FIELD("eval.workers", c.eval.workers, int),
      {"eval.noise_level",
       [](RunConfig& c, const std::string& v) {
         c.eval.noise_matched = v == "matched";
         if (!c.eval.noise_matched) c.eval.noise_level = parse_number<double>("eval.noise_level", v);
       },
       [](const RunConfig& c) { return c.eval.noise_matched ? std::string("matched") : real(c.eval.noise_level); }},
      {"eval.horizons",
       [](RunConfig& c, const std::string& v) {
         c.eval.horizons.clear();
         for (const auto& item : split_list(v)) c.eval.horizons.push_back(parse_number<int>("eval.horizons", item));
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.eval.horizons.size(); ++i) s += (i ? "," : "") + std::to_string(c.eval.horizons[i]);
         return s;
       }},
  };
  return table;
}

#undef ADAPTCT_INT_FIELD
#undef ADAPTCT_REAL_FIELD
#undef ADAPTCT_BOOL_FIELD
#undef ADAPTCT_STRING_FIELD

}  // namespace config_detail

/// Applies one `key = value` assignment.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) return f.set(cfg, value);
  throw UnknownKeyError(key);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys{"version"};
  for (const auto& f : config_detail::fields()) keys.push_back(f.key);
  return keys;
}

/// Parses the text form over the defaults and validates the result.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  bool have_version = false;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = config_detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = config_detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = config_detail::trim(std::string_view(body).substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError("config key '" + key + "' given twice");
    seen.push_back(key);
    if (key == "version") {
      if (config_detail::parse_number<int>(key, value) != kConfigVersion)
        throw ConfigError("unsupported config version " + value);
      have_version = true;
      continue;
    }
    set_config_value(cfg, key, value);
  }
  if (!have_version) throw ConfigError("config is missing the 'version' key");
  cfg.validate();
  return cfg;
}

/// Every key with its effective value, in schema order. Parsing this text
/// yields the same configuration.
inline std::string resolved_config_text(const RunConfig& cfg) {
  std::string out = "version = " + std::to_string(kConfigVersion) + "\n";
  for (const auto& f : config_detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace adaptct
