#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "dcmd/rng.hpp"

namespace dcmd::app {

using nlohmann::json;

void RunConfig::validate() const {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (samples < 1) throw ConfigError("samples must be >= 1");
  ModelConfig m = model;
  m.finalize();
  train.validate();
  fuse.validate();
  if (synth.n_clips < 1 || synth.n_actors < 1 || synth.clip_len < 1)
    throw ConfigError("n_clips, n_actors and clip_len must be >= 1");
  if (!(synth.anomaly_rate >= 0.0 && synth.anomaly_rate <= 1.0))
    throw ConfigError("anomaly_rate must lie in [0, 1]");
  if (!(synth.jitter >= 0.0)) throw ConfigError("jitter must be >= 0");
}

void RunConfig::finalize() {
  model.finalize();
  validate();
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

template <class T>
T parse_num(const std::string& key, const std::string& text, const char* want) {
  T v{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) bad(key, text, want);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  bad(key, text, "true or false");
}

std::vector<int> parse_list(const std::string& key, std::string text) {
  if (!text.empty() && text.front() == '[' && text.back() == ']')
    text = text.substr(1, text.size() - 2);
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    out.push_back(parse_num<int>(key, item, "a list of integers"));
  }
  if (out.empty()) bad(key, text, "a non-empty list of integers");
  return out;
}

template <class Field>
ConfigKey int_key(std::string name, std::string help, Field field) {
  return ConfigKey{name, KeyType::Int, std::move(help),
                   [field](const RunConfig& c) { return std::to_string(field(c)); },
                   [field, name](RunConfig& c, const std::string& v) {
                     field(c) = parse_num<int>(name, v, "an integer");
                   }};
}

template <class Field>
ConfigKey double_key(std::string name, std::string help, Field field) {
  return ConfigKey{name, KeyType::Double, std::move(help),
                   [field](const RunConfig& c) { return fmt_double(field(c)); },
                   [field, name](RunConfig& c, const std::string& v) {
                     field(c) = parse_num<double>(name, v, "a number");
                   }};
}

template <class Field>
ConfigKey bool_key(std::string name, std::string help, Field field) {
  return ConfigKey{name, KeyType::Bool, std::move(help),
                   [field](const RunConfig& c) {
                     return std::string(field(c) ? "true" : "false");
                   },
                   [field, name](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); }};
}

template <class Get, class Set>
ConfigKey string_key(std::string name, std::string help, Get get, Set set) {
  return ConfigKey{name, KeyType::String, std::move(help), get, set};
}

std::vector<ConfigKey> make_keys() {
  std::vector<ConfigKey> k;
  k.push_back(string_key(
      "dataset", "dataset name reported by eval",
      [](const RunConfig& c) { return c.dataset; },
      [](RunConfig& c, const std::string& v) { c.dataset = v; }));
  k.push_back(string_key(
      "data", "track directory (train and score)", [](const RunConfig& c) { return c.data; },
      [](RunConfig& c, const std::string& v) { c.data = v; }));
  k.push_back(string_key(
      "labels", "labels CSV (score and eval)", [](const RunConfig& c) { return c.labels; },
      [](RunConfig& c, const std::string& v) { c.labels = v; }));

  k.push_back(int_key("history", "observed frames H", [](auto& c) -> auto& { return c.model.history; }));
  k.push_back(int_key("future", "predicted frames F", [](auto& c) -> auto& { return c.model.future; }));
  k.push_back(int_key("stride", "window stride in frames", [](auto& c) -> auto& { return c.stride; }));
  k.push_back(int_key("layers", "denoiser blocks L", [](auto& c) -> auto& { return c.model.denoiser.layers; }));
  k.push_back(int_key("heads", "attention heads h", [](auto& c) -> auto& { return c.model.denoiser.heads; }));
  k.push_back(int_key("width", "denoiser width D", [](auto& c) -> auto& { return c.model.denoiser.width; }));
  k.push_back(double_key("attn_scale", "attention temperature; 0 means sqrt(2D)",
                         [](auto& c) -> auto& { return c.model.denoiser.attn_scale; }));
  k.push_back(ConfigKey{
      "ae_hidden", KeyType::IntList, "autoencoder channel widths",
      [](const RunConfig& c) {
        std::string s;
        for (int v : c.model.autoencoder.hidden) s += (s.empty() ? "" : ",") + std::to_string(v);
        return s;
      },
      [](RunConfig& c, const std::string& v) { c.model.autoencoder.hidden = parse_list("ae_hidden", v); }});
  k.push_back(int_key("embedding_dim", "conditioning embedding width",
                      [](auto& c) -> auto& { return c.model.autoencoder.embedding_dim; }));
  k.push_back(int_key("temporal_kernel", "autoencoder temporal kernel (odd)",
                      [](auto& c) -> auto& { return c.model.autoencoder.temporal_kernel; }));

  k.push_back(double_key("lr", "Adam learning rate", [](auto& c) -> auto& { return c.train.lr; }));
  k.push_back(int_key("lr_decay_every", "epochs between learning-rate decays",
                      [](auto& c) -> auto& { return c.train.lr_decay_every; }));
  k.push_back(double_key("lr_decay_factor", "learning-rate decay factor",
                         [](auto& c) -> auto& { return c.train.lr_decay_factor; }));
  k.push_back(int_key("batch_size", "windows per step", [](auto& c) -> auto& { return c.train.batch_size; }));
  k.push_back(int_key("epochs", "training epochs (total, including resumed ones)",
                      [](auto& c) -> auto& { return c.train.epochs; }));
  k.push_back(double_key("lambda", "association-discrepancy weight",
                         [](auto& c) -> auto& { return c.train.lambda; }));
  k.push_back(ConfigKey{"seed", KeyType::UInt, "root random seed",
                        [](const RunConfig& c) { return std::to_string(c.train.seed); },
                        [](RunConfig& c, const std::string& v) {
                          c.train.seed = parse_num<std::uint64_t>("seed", v, "a non-negative integer");
                        }});
  k.push_back(int_key("steps", "diffusion steps T", [](auto& c) -> auto& { return c.train.steps; }));
  k.push_back(double_key("beta1", "first noise variance", [](auto& c) -> auto& { return c.train.beta1; }));
  k.push_back(double_key("betaT", "last noise variance", [](auto& c) -> auto& { return c.train.betaT; }));
  k.push_back(string_key(
      "schedule", "cosine-beta | cosine-alpha-bar",
      [](const RunConfig& c) { return to_string(c.train.schedule); },
      [](RunConfig& c, const std::string& v) { c.train.schedule = schedule_kind_from_string(v); }));
  k.push_back(string_key(
      "sigma", "sqrt-beta | posterior", [](const RunConfig& c) { return to_string(c.train.sigma); },
      [](RunConfig& c, const std::string& v) { c.train.sigma = sigma_kind_from_string(v); }));
  k.push_back(bool_key("minimax", "stop-gradient minimax (false: plain objective)",
                       [](auto& c) -> auto& { return c.train.minimax; }));
  k.push_back(double_key("smooth_l1_beta", "smooth-L1 threshold",
                         [](auto& c) -> auto& { return c.train.smooth_l1_beta; }));

  k.push_back(int_key("samples", "futures sampled per window (m)", [](auto& c) -> auto& { return c.samples; }));
  k.push_back(string_key(
      "sampler_init", "gaussian | noised-observation",
      [](const RunConfig& c) { return to_string(c.sampler_init); },
      [](RunConfig& c, const std::string& v) { c.sampler_init = sampler_init_from_string(v); }));
  k.push_back(string_key(
      "sample_reduce", "min | mean over samples",
      [](const RunConfig& c) { return to_string(c.fuse.sample_reduce); },
      [](RunConfig& c, const std::string& v) { c.fuse.sample_reduce = sample_reduce_from_string(v); }));
  k.push_back(double_key("branch_weight", "1 = reconstruction only, 0 = prediction only",
                         [](auto& c) -> auto& { return c.fuse.branch_weight; }));
  k.push_back(string_key(
      "actor_reduce", "max | mean over actors",
      [](const RunConfig& c) { return to_string(c.fuse.actor_reduce); },
      [](RunConfig& c, const std::string& v) { c.fuse.actor_reduce = actor_reduce_from_string(v); }));
  k.push_back(string_key(
      "window_reduce", "mean | max over windows",
      [](const RunConfig& c) { return to_string(c.fuse.window_reduce); },
      [](RunConfig& c, const std::string& v) { c.fuse.window_reduce = window_reduce_from_string(v); }));
  k.push_back(string_key(
      "normalize", "none | per-clip-minmax | per-branch-minmax",
      [](const RunConfig& c) { return to_string(c.fuse.normalize); },
      [](RunConfig& c, const std::string& v) { c.fuse.normalize = normalize_from_string(v); }));

  k.push_back(int_key("n_clips", "synth: clips", [](auto& c) -> auto& { return c.synth.n_clips; }));
  k.push_back(int_key("n_actors", "synth: actors per clip", [](auto& c) -> auto& { return c.synth.n_actors; }));
  k.push_back(int_key("clip_len", "synth: frames per clip", [](auto& c) -> auto& { return c.synth.clip_len; }));
  k.push_back(double_key("anomaly_rate", "synth: anomalous frame fraction",
                         [](auto& c) -> auto& { return c.synth.anomaly_rate; }));
  k.push_back(string_key(
      "anomaly_kind", "synth: freq-shift | amplitude-burst | joint-swap | mixed",
      [](const RunConfig& c) { return to_string(c.synth.anomaly_kind); },
      [](RunConfig& c, const std::string& v) { c.synth.anomaly_kind = anomaly_kind_from_string(v); }));
  k.push_back(double_key("jitter", "synth: coordinate noise in pixels",
                         [](auto& c) -> auto& { return c.synth.jitter; }));
  return k;
}

const ConfigKey& find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = make_keys();
  return keys;
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "full") {
    c.model = full_model_config();
    return c;
  }
  if (name == "desk") {
    c.model = desk_model_config();
    c.train = desk_train_config();
    c.synth.n_clips = 8;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected full or desk)");
}

void apply_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  try {
    find_key(key).set(cfg, value);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.find("'" + key + "'") != std::string::npos) throw;
    throw ConfigError("config key '" + key + "': " + what);
  }
}

void apply_json(RunConfig& cfg, const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const ConfigKey& key = find_key(it.key());
    const json& v = it.value();
    std::string text;
    if (v.is_string()) {
      text = v.get<std::string>();
    } else if (v.is_array()) {
      for (const auto& x : v) text += (text.empty() ? "" : ",") + x.dump();
    } else {
      text = v.dump();
    }
    apply_value(cfg, key.name, text);
  }
}

std::string to_json(const RunConfig& cfg) {
  json doc = json::object();
  for (const auto& k : config_keys()) {
    const std::string v = k.get(cfg);
    switch (k.type) {
      case KeyType::Int: doc[k.name] = std::stoll(v); break;
      case KeyType::UInt: doc[k.name] = std::stoull(v); break;
      case KeyType::Double: doc[k.name] = std::stod(v); break;
      case KeyType::Bool: doc[k.name] = v == "true"; break;
      case KeyType::String: doc[k.name] = v; break;
      case KeyType::IntList: doc[k.name] = parse_list(k.name, v); break;
    }
  }
  return doc.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(cfg))));
  return buf;
}

}  // namespace dcmd::app
