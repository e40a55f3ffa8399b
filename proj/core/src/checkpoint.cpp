#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dcmd/training.hpp"
#include "file_io.hpp"

namespace dcmd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'C', 'M', 'D', 'C', 'K', 'P', 'T'};

void expect_known(const json& j, std::initializer_list<const char*> keys, const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError(std::string("unknown ") + what + " key '" + it.key() + "'");
  }
}

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

json model_json(const ModelConfig& c) {
  json adj = json::array();
  for (Eigen::Index r = 0; r < c.autoencoder.adjacency.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index k = 0; k < c.autoencoder.adjacency.cols(); ++k)
      row.push_back(c.autoencoder.adjacency(r, k));
    adj.push_back(row);
  }
  return json{{"history", c.history},
              {"future", c.future},
              {"layers", c.denoiser.layers},
              {"heads", c.denoiser.heads},
              {"width", c.denoiser.width},
              {"attn_scale", c.denoiser.attn_scale},
              {"ae_hidden", c.autoencoder.hidden},
              {"embedding_dim", c.autoencoder.embedding_dim},
              {"joints", c.autoencoder.joints},
              {"coords", c.autoencoder.coords},
              {"temporal_kernel", c.autoencoder.temporal_kernel},
              {"adjacency", adj}};
}

ModelConfig model_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  expect_known(j,
                     {"history", "future", "layers", "heads", "width", "attn_scale", "ae_hidden",
                      "embedding_dim", "joints", "coords", "temporal_kernel", "adjacency"},
                     "model");
  take(j, "history", c.history);
  take(j, "future", c.future);
  take(j, "layers", c.denoiser.layers);
  take(j, "heads", c.denoiser.heads);
  take(j, "width", c.denoiser.width);
  take(j, "attn_scale", c.denoiser.attn_scale);
  take(j, "ae_hidden", c.autoencoder.hidden);
  take(j, "embedding_dim", c.autoencoder.embedding_dim);
  take(j, "joints", c.autoencoder.joints);
  take(j, "coords", c.autoencoder.coords);
  take(j, "temporal_kernel", c.autoencoder.temporal_kernel);
  if (j.contains("adjacency") && !j["adjacency"].empty()) {
    std::vector<std::vector<double>> rows;
    take(j, "adjacency", rows);
    Mat adj(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw ConfigError("adjacency must be square");
      for (std::size_t k = 0; k < rows.size(); ++k)
        adj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
    }
    c.autoencoder.adjacency = adj;
  }
  c.finalize();
  return c;
}

json train_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"lr_decay_every", c.lr_decay_every},
              {"lr_decay_factor", c.lr_decay_factor},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"lambda", c.lambda},
              {"seed", c.seed},
              {"steps", c.steps},
              {"beta1", c.beta1},
              {"betaT", c.betaT},
              {"schedule", to_string(c.schedule)},
              {"sigma", to_string(c.sigma)},
              {"minimax", c.minimax},
              {"smooth_l1_beta", c.smooth_l1_beta}};
}

TrainConfig train_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  expect_known(j,
                     {"lr", "lr_decay_every", "lr_decay_factor", "batch_size", "epochs", "lambda",
                      "seed", "steps", "beta1", "betaT", "schedule", "sigma", "minimax",
                      "smooth_l1_beta"},
                     "training");
  take(j, "lr", c.lr);
  take(j, "lr_decay_every", c.lr_decay_every);
  take(j, "lr_decay_factor", c.lr_decay_factor);
  take(j, "batch_size", c.batch_size);
  take(j, "epochs", c.epochs);
  take(j, "lambda", c.lambda);
  take(j, "seed", c.seed);
  take(j, "steps", c.steps);
  take(j, "beta1", c.beta1);
  take(j, "betaT", c.betaT);
  std::string name;
  if (j.contains("schedule")) {
    take(j, "schedule", name);
    c.schedule = schedule_kind_from_string(name);
  }
  if (j.contains("sigma")) {
    take(j, "sigma", name);
    c.sigma = sigma_kind_from_string(name);
  }
  take(j, "minimax", c.minimax);
  take(j, "smooth_l1_beta", c.smooth_l1_beta);
  c.validate();
  return c;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

// Binary helpers ------------------------------------------------------------

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_mat(std::string& out, const Mat& m) {
  out.append(reinterpret_cast<const char*>(m.data()),
             static_cast<std::size_t>(m.size()) * sizeof(double));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Mat mat(Eigen::Index rows, Eigen::Index cols) {
    if (rows < 0 || cols < 0) throw CorruptionError("checkpoint: negative shape");
    Mat m(rows, cols);
    auto s = take(static_cast<std::size_t>(rows * cols) * sizeof(double));
    std::memcpy(m.data(), s.data(), s.size());
    return m;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptionError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json shapes(const ParamSet& set) {
  json arr = json::array();
  for (const auto& p : set) arr.push_back({p.name, p.value.rows(), p.value.cols()});
  return arr;
}

ParamSet read_params(Reader& r, const json& shape_list) {
  ParamSet set;
  for (const auto& s : shape_list) {
    const auto name = s.at(0).get<std::string>();
    const auto rows = s.at(1).get<Eigen::Index>();
    const auto cols = s.at(2).get<Eigen::Index>();
    set.add(name, r.mat(rows, cols));
  }
  return set;
}

}  // namespace

std::string to_json(const ModelConfig& cfg) { return model_json(cfg).dump(2); }
std::string to_json(const TrainConfig& cfg) { return train_json(cfg).dump(2); }

ModelConfig model_config_from_json(const std::string& text, const ModelConfig& base) {
  return model_from_json(parse_json(text), base);
}

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base) {
  return train_from_json(parse_json(text), base);
}

// Layout: magic, u32 version, u64 header length, JSON header, raw doubles
// (betas, denoiser, autoencoder, Adam m, Adam v), u64 FNV-1a of all preceding bytes.
std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json log = json::array();
  for (const auto& e : ckpt.log)
    log.push_back({e.epoch, e.loss_total, e.loss_rec, e.loss_pred, e.uad_norm, e.lr});
  json moments = json::array();
  for (const auto& m : ckpt.adam_m) moments.push_back({m.rows(), m.cols()});
  if (ckpt.adam_v.size() != ckpt.adam_m.size())
    throw StateError("checkpoint: Adam moment lists differ in length");

  json header{{"model", model_json(ckpt.model)},
              {"train", train_json(ckpt.train)},
              {"n_betas", ckpt.betas.size()},
              {"denoiser", shapes(ckpt.denoiser_params)},
              {"autoencoder", shapes(ckpt.autoencoder_params)},
              {"epoch", ckpt.epoch},
              {"adam_steps", ckpt.adam_steps},
              {"adam_moments", moments},
              {"rng_state", ckpt.rng_state},
              {"log", log}};
  const std::string head = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint64_t>(out, head.size());
  out += head;
  for (double b : ckpt.betas) put(out, b);
  for (const auto* set : {&ckpt.denoiser_params, &ckpt.autoencoder_params})
    for (const auto& p : *set) put_mat(out, p.value);
  for (const auto& m : ckpt.adam_m) put_mat(out, m);
  for (std::size_t i = 0; i < ckpt.adam_v.size(); ++i) {
    if (ckpt.adam_v[i].rows() != ckpt.adam_m[i].rows() || ckpt.adam_v[i].cols() != ckpt.adam_m[i].cols())
      throw StateError("checkpoint: Adam moment shapes differ");
    put_mat(out, ckpt.adam_v[i]);
  }
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8) throw CorruptionError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CorruptionError("not a checkpoint file (bad magic)");
  const std::string_view body(bytes.data(), bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a64(body) != stored) throw CorruptionError("checkpoint checksum mismatch");

  Reader r(body);
  r.take(sizeof(kMagic));
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion)
    throw CorruptionError("unsupported checkpoint version " + std::to_string(ckpt.version));
  const auto head_len = r.get<std::uint64_t>();
  if (head_len > r.remaining()) throw CorruptionError("checkpoint is truncated");
  try {
    const json header = json::parse(r.take(static_cast<std::size_t>(head_len)));
    ckpt.model = model_from_json(header.at("model"), ModelConfig{});
    ckpt.train = train_from_json(header.at("train"), TrainConfig{});
    ckpt.betas.resize(header.at("n_betas").get<std::size_t>());
    for (double& b : ckpt.betas) b = r.get<double>();
    ckpt.denoiser_params = read_params(r, header.at("denoiser"));
    ckpt.autoencoder_params = read_params(r, header.at("autoencoder"));
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.adam_steps = header.at("adam_steps").get<long>();
    const auto& moments = header.at("adam_moments");
    for (auto* dst : {&ckpt.adam_m, &ckpt.adam_v})
      for (const auto& s : moments)
        dst->push_back(r.mat(s.at(0).get<Eigen::Index>(), s.at(1).get<Eigen::Index>()));
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& e : header.at("log"))
      ckpt.log.push_back(EpochLog{e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>(),
                                  e.at(3).get<double>(), e.at(4).get<double>(),
                                  e.at(5).get<double>()});
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint config is invalid: ") + e.what());
  }
  if (r.remaining() != 0) throw CorruptionError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  detail::write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const fs::path& path) {
  return deserialize_checkpoint(detail::read_file(path));
}

std::uint64_t checkpoint_hash(const Checkpoint& ckpt) { return fnv1a64(serialize_checkpoint(ckpt)); }

void write_training_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,loss_total,loss_rec,loss_pred,uad_norm,lr\n";
  for (const auto& e : log)
    out << e.epoch << ',' << e.loss_total << ',' << e.loss_rec << ',' << e.loss_pred << ','
        << e.uad_norm << ',' << e.lr << '\n';
  detail::write_file_atomic(path, out.str());
}

}  // namespace dcmd
