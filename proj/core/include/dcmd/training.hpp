#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcmd/denoiser.hpp"
#include "dcmd/diffusion.hpp"
#include "dcmd/pose_data.hpp"
#include "dcmd/reconstruction.hpp"
#include "dcmd/uad.hpp"

namespace dcmd {

struct TrainConfig {
  double lr = 1e-4;
  int lr_decay_every = 36;  // epochs
  double lr_decay_factor = 0.5;
  int batch_size = 1024;
  int epochs = 100;
  double lambda = 0.01;
  std::uint64_t seed = 0;
  int steps = 10;  // T
  double beta1 = 1e-4;
  double betaT = 2e-2;
  ScheduleKind schedule = ScheduleKind::CosineBeta;
  SigmaKind sigma = SigmaKind::SqrtBeta;
  bool minimax = true;
  double smooth_l1_beta = 1.0;

  void validate() const;
  /// lr * factor^floor(epoch / decay_every), epoch counted from 0.
  double lr_at(int epoch) const;
};

struct ModelConfig {
  int history = 3;
  int future = 4;
  DenoiserConfig denoiser;
  AutoencoderConfig autoencoder;

  /// Fills derived sizes (seq_len, in_dim, cond_dim, history, joints) and validates.
  void finalize();
};

/// Full-size hyperparameters (L=6, h=8, D=512, encoder (512, 256), u of 256).
ModelConfig full_model_config();
/// Desk-scale sizes used by the acceptance runs (L=2, h=4, D=64).
ModelConfig desk_model_config();
/// Optimizer settings paired with desk_model_config (batch 64, lr 1e-3, 40 epochs,
/// halving every 15).
TrainConfig desk_train_config();

struct Model {
  ModelConfig config;
  Denoiser denoiser;
  Autoencoder autoencoder;

  Model(const ModelConfig& cfg, std::uint64_t seed);
  std::vector<ParamSet*> param_sets() { return {&denoiser.params(), &autoencoder.params()}; }
  void zero_grad();
};

/// Tape-level result of one forward pass over a batch (training objective terms).
struct ForwardPass {
  Eigen::Index batch = 0;
  ag::Var u;
  ag::Var reconstruction;
  ag::Var rec;
  ag::Var pred;
  std::vector<ag::Var> time_assoc;
  std::vector<ag::Var> global_assoc;
  ag::Var uad;  // frame-averaged |UAD| (value only; no gradient meaning)
};

/// Diffusion step and noise draw for each sequence of a batch.
struct BatchNoise {
  std::vector<int> steps;  // 1..T per sequence
  Mat eps;                 // (batch*seq) x 2J
};

std::vector<int> sample_steps(Rng& rng, Eigen::Index batch, int steps);
BatchNoise sample_noise(Rng& rng, Eigen::Index batch, Eigen::Index seq, Eigen::Index width,
                        int steps);

/// Stacks windows into (batch*(H+F)) x 2J.
Mat stack_windows(const std::vector<MotionWindow>& windows, const std::vector<std::size_t>& order,
                  std::size_t begin, std::size_t end);

/// `motion` is (batch*(H+F)) x 2J in the time domain. The encoder sees only
/// the first H rows of every sequence.
ForwardPass forward_pass(Binder& dbind, Binder& abind, const Model& model,
                         const NoiseSchedule& sched, const Mat& motion, const BatchNoise& noise,
                         double smooth_l1_beta);

enum class Objective {
  Minimax,  // both stop-gradient phases in one backward pass
  Plain,    // rec + pred - lambda |UAD| without stop-gradient
  MinPhase, // rec + pred + lambda |UAD(T, sg G)|
  MaxPhase, // rec + pred - lambda |UAD(sg T, G)|
};

ag::Var objective(const ForwardPass& pass, Objective kind, double lambda);

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0;  // rec + pred - lambda |UAD|
  double loss_rec = 0.0;
  double loss_pred = 0.0;
  double uad_norm = 0.0;
  double lr = 0.0;
};

struct StepLosses {
  double total = 0.0, rec = 0.0, pred = 0.0, uad = 0.0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig model;
  TrainConfig train;
  std::vector<double> betas;  // explicit schedule; never re-derived on load
  ParamSet denoiser_params;
  ParamSet autoencoder_params;
  int epoch = 0;  // completed epochs
  long adam_steps = 0;
  std::vector<Mat> adam_m, adam_v;
  std::string rng_state;
  std::vector<EpochLog> log;
};

/// Owns the model, optimizer and RNG of one training run.
class Trainer {
 public:
  Trainer(const ModelConfig& model_cfg, const TrainConfig& cfg);
  explicit Trainer(const Checkpoint& ckpt);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  int epoch() const { return epoch_; }
  const std::vector<EpochLog>& log() const { return log_; }

  /// One optimizer update on the given sequences and noise.
  StepLosses step(const Mat& motion, const BatchNoise& noise, Objective kind, double lr);

  /// One pass over `windows` in a seeded shuffled order.
  EpochLog run_epoch(const std::vector<MotionWindow>& windows);

  Checkpoint checkpoint() const;

 private:
  ModelConfig model_cfg_;
  TrainConfig cfg_;
  Model model_;
  NoiseSchedule schedule_;
  Adam adam_;
  Rng rng_;
  int epoch_ = 0;
  std::vector<EpochLog> log_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Runs cfg.epochs epochs from scratch. Windows must be normalized and of
/// length H+F. Throws NumericError naming the first non-finite loss term.
Checkpoint train(const std::vector<MotionWindow>& windows, const ModelConfig& model_cfg,
                 const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Continues a checkpoint for `extra_epochs` more epochs.
Checkpoint resume(const Checkpoint& ckpt, const std::vector<MotionWindow>& windows,
                  int extra_epochs, const EpochCallback& on_epoch = {});

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
/// Atomic write (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::uint64_t checkpoint_hash(const Checkpoint& ckpt);

/// Rebuilds the model stored in a checkpoint.
Model model_from_checkpoint(const Checkpoint& ckpt);
NoiseSchedule schedule_from_checkpoint(const Checkpoint& ckpt);

/// JSON round trip for configs. Parsing rejects unknown keys and keeps
/// defaults for absent ones.
std::string to_json(const ModelConfig& cfg);
std::string to_json(const TrainConfig& cfg);
ModelConfig model_config_from_json(const std::string& text, const ModelConfig& base = {});
TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base = {});

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace dcmd
