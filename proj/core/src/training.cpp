#include "dcmd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dcmd/spectrum.hpp"

namespace dcmd {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw ConfigError("lr_decay_factor must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (!(smooth_l1_beta > 0.0)) throw ConfigError("smooth_l1_beta must be positive");
  build_schedule(steps, beta1, betaT, schedule, sigma);  // validates bounds
}

double TrainConfig::lr_at(int epoch) const {
  return lr * std::pow(lr_decay_factor, epoch / lr_decay_every);
}

void ModelConfig::finalize() {
  if (history < 1 || future < 1) throw ConfigError("history and future must be >= 1");
  denoiser.seq_len = history + future;
  denoiser.in_dim = autoencoder.joints * autoencoder.coords;
  denoiser.cond_dim = autoencoder.embedding_dim;
  autoencoder.history = history;
  if (autoencoder.adjacency.size() == 0 && autoencoder.joints == kNumJoints)
    autoencoder.adjacency = coco_adjacency();
  denoiser.validate();
  autoencoder.validate();
}

ModelConfig full_model_config() {
  ModelConfig cfg;
  cfg.finalize();
  return cfg;
}

ModelConfig desk_model_config() {
  ModelConfig cfg;
  cfg.denoiser.layers = 2;
  cfg.denoiser.heads = 4;
  cfg.denoiser.width = 64;
  cfg.autoencoder.hidden = {32, 16};
  cfg.autoencoder.embedding_dim = 32;
  cfg.finalize();
  return cfg;
}

TrainConfig desk_train_config() {
  TrainConfig tc;
  tc.batch_size = 64;
  tc.lr = 1e-3;
  tc.epochs = 40;
  tc.lr_decay_every = 15;
  return tc;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed)
    : config(cfg), denoiser(cfg.denoiser, seed), autoencoder(cfg.autoencoder, seed) {}

void Model::zero_grad() {
  denoiser.params().zero_grad();
  autoencoder.params().zero_grad();
}

std::vector<int> sample_steps(Rng& rng, Eigen::Index batch, int steps) {
  std::uniform_int_distribution<int> pick(1, steps);
  std::vector<int> out(static_cast<std::size_t>(batch));
  for (auto& t : out) t = pick(rng);
  return out;
}

BatchNoise sample_noise(Rng& rng, Eigen::Index batch, Eigen::Index seq, Eigen::Index width,
                        int steps) {
  BatchNoise noise;
  noise.steps = sample_steps(rng, batch, steps);
  noise.eps = standard_normal(rng, batch * seq, width);
  return noise;
}

Mat stack_windows(const std::vector<MotionWindow>& windows, const std::vector<std::size_t>& order,
                  std::size_t begin, std::size_t end) {
  if (begin >= end) throw ArgumentError("stack_windows: empty range");
  const Eigen::Index seq = windows[order[begin]].horizon();
  Mat out(static_cast<Eigen::Index>(end - begin) * seq, kFlatWidth);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& w = windows[order[i]];
    if (w.horizon() != seq) throw ArgumentError("stack_windows: windows differ in length");
    out.middleRows(static_cast<Eigen::Index>(i - begin) * seq, seq) = flatten(w);
  }
  return out;
}

ForwardPass forward_pass(Binder& dbind, Binder& abind, const Model& model,
                         const NoiseSchedule& sched, const Mat& motion, const BatchNoise& noise,
                         double smooth_l1_beta) {
  const auto& cfg = model.config;
  const Eigen::Index seq = cfg.history + cfg.future;
  if (motion.rows() % seq != 0 || motion.cols() != cfg.denoiser.in_dim)
    throw ShapeError("forward_pass: motion must be (batch*(H+F)) x 2J");
  const Eigen::Index batch = motion.rows() / seq;
  if (noise.eps.rows() != motion.rows() || noise.eps.cols() != motion.cols() ||
      static_cast<Eigen::Index>(noise.steps.size()) != batch)
    throw ArgumentError("forward_pass: noise does not match the batch");
  ag::Tape& tape = dbind.tape();

  Mat hist(batch * cfg.history, motion.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    hist.middleRows(b * cfg.history, cfg.history) = motion.middleRows(b * seq, cfg.history);

  ForwardPass pass;
  pass.batch = batch;
  ag::Var hist_var = tape.constant(std::move(hist));
  pass.u = model.autoencoder.encode_var(abind, hist_var, batch);
  pass.reconstruction = model.autoencoder.decode_var(abind, pass.u, batch);
  pass.rec = rec_loss(pass.reconstruction, hist_var, batch);

  const Mat x0 = dct_blocks(motion, seq);
  Mat xt(x0.rows(), x0.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int t = noise.steps[static_cast<std::size_t>(b)];
    xt.middleRows(b * seq, seq) =
        q_sample(Mat(x0.middleRows(b * seq, seq)), t, Mat(noise.eps.middleRows(b * seq, seq)), sched);
  }
  auto out = model.denoiser.forward(dbind, tape.constant(std::move(xt)), noise.steps, pass.u, batch);
  pass.pred = pred_loss(tape.constant(noise.eps), out.eps_pred, smooth_l1_beta);
  for (std::size_t l = 0; l < out.sigma.size(); ++l)
    pass.time_assoc.push_back(ag::time_association(out.sigma[l], batch, seq));
  pass.global_assoc = out.assoc;
  pass.uad = uad_norm(pass.time_assoc, pass.global_assoc);
  return pass;
}

ag::Var objective(const ForwardPass& pass, Objective kind, double lambda) {
  switch (kind) {
    case Objective::Minimax:
      return minimax_objective(pass.rec, pass.pred, pass.time_assoc, pass.global_assoc, lambda);
    case Objective::Plain:
      return pass.rec + pass.pred - ag::scale(pass.uad, lambda);
    case Objective::MinPhase:
      return minimax_losses(pass.rec, pass.pred, pass.time_assoc, pass.global_assoc, lambda).loss_min;
    case Objective::MaxPhase:
      return minimax_losses(pass.rec, pass.pred, pass.time_assoc, pass.global_assoc, lambda).loss_max;
  }
  throw ArgumentError("unknown objective");
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& cfg)
    : model_cfg_(model_cfg),
      cfg_(cfg),
      model_(model_cfg, cfg.seed),
      schedule_(build_schedule(cfg.steps, cfg.beta1, cfg.betaT, cfg.schedule, cfg.sigma)),
      rng_(derive_rng(cfg.seed, "train")) {
  cfg_.validate();
}

Trainer::Trainer(const Checkpoint& ckpt)
    : model_cfg_(ckpt.model),
      cfg_(ckpt.train),
      model_(model_from_checkpoint(ckpt)),
      schedule_(schedule_from_checkpoint(ckpt)),
      epoch_(ckpt.epoch),
      log_(ckpt.log) {
  adam_.set_steps(ckpt.adam_steps);
  adam_.first_moments() = ckpt.adam_m;
  adam_.second_moments() = ckpt.adam_v;
  std::istringstream in(ckpt.rng_state);
  in >> rng_;
  if (!in) throw CorruptionError("checkpoint RNG state unreadable");
}

StepLosses Trainer::step(const Mat& motion, const BatchNoise& noise, Objective kind, double lr) {
  ag::Tape tape;
  Binder dbind(tape, model_.denoiser.params());
  Binder abind(tape, model_.autoencoder.params());
  ForwardPass pass = forward_pass(dbind, abind, model_, schedule_, motion, noise, cfg_.smooth_l1_beta);

  StepLosses losses;
  losses.rec = pass.rec.value()(0, 0);
  losses.pred = pass.pred.value()(0, 0);
  losses.uad = pass.uad.value()(0, 0);
  losses.total = losses.rec + losses.pred - cfg_.lambda * losses.uad;
  const std::pair<const char*, double> terms[] = {
      {"loss_rec", losses.rec}, {"loss_pred", losses.pred}, {"uad", losses.uad}};
  for (auto [name, value] : terms)
    if (!std::isfinite(value))
      throw NumericError(std::string("non-finite ") + name + " at epoch " + std::to_string(epoch_));

  ag::Var loss = objective(pass, kind, cfg_.lambda);
  tape.backward(loss);
  model_.zero_grad();
  dbind.accumulate_grads(model_.denoiser.params());
  abind.accumulate_grads(model_.autoencoder.params());
  adam_.step(model_.param_sets(), lr);
  return losses;
}

EpochLog Trainer::run_epoch(const std::vector<MotionWindow>& windows) {
  if (windows.empty()) throw ArgumentError("train: dataset is empty");
  const int seq = model_cfg_.history + model_cfg_.future;
  for (const auto& w : windows)
    if (w.horizon() != seq ||
        static_cast<int>(w.history.size()) != model_cfg_.history)
      throw ShapeError("train: window length differs from H+F of the model");

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);

  const double lr = cfg_.lr_at(epoch_);
  const Objective kind = cfg_.minimax ? Objective::Minimax : Objective::Plain;
  EpochLog log;
  log.epoch = epoch_;
  log.lr = lr;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg_.batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg_.batch_size));
    const Mat motion = stack_windows(windows, order, begin, end);
    const BatchNoise noise = sample_noise(rng_, static_cast<Eigen::Index>(end - begin), seq,
                                          kFlatWidth, schedule_.steps());
    const StepLosses s = step(motion, noise, kind, lr);
    log.loss_total += s.total;
    log.loss_rec += s.rec;
    log.loss_pred += s.pred;
    log.uad_norm += s.uad;
    ++batches;
  }
  const double n = static_cast<double>(batches);
  log.loss_total /= n;
  log.loss_rec /= n;
  log.loss_pred /= n;
  log.uad_norm /= n;
  ++epoch_;
  log_.push_back(log);
  return log;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.model = model_cfg_;
  ckpt.train = cfg_;
  ckpt.betas = schedule_.betas();
  ckpt.denoiser_params = model_.denoiser.params();
  ckpt.autoencoder_params = model_.autoencoder.params();
  for (auto* set : {&ckpt.denoiser_params, &ckpt.autoencoder_params}) set->zero_grad();
  ckpt.epoch = epoch_;
  ckpt.adam_steps = adam_.steps_taken();
  ckpt.adam_m = adam_.first_moments();
  ckpt.adam_v = adam_.second_moments();
  std::ostringstream rng_state;
  rng_state << rng_;
  ckpt.rng_state = rng_state.str();
  ckpt.log = log_;
  return ckpt;
}

Checkpoint train(const std::vector<MotionWindow>& windows, const ModelConfig& model_cfg,
                 const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (windows.empty()) throw ArgumentError("train: dataset is empty");
  Trainer trainer(model_cfg, cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochLog log = trainer.run_epoch(windows);
    if (on_epoch) on_epoch(log);
  }
  return trainer.checkpoint();
}

Checkpoint resume(const Checkpoint& ckpt, const std::vector<MotionWindow>& windows,
                  int extra_epochs, const EpochCallback& on_epoch) {
  Trainer trainer(ckpt);
  for (int e = 0; e < extra_epochs; ++e) {
    const EpochLog log = trainer.run_epoch(windows);
    if (on_epoch) on_epoch(log);
  }
  return trainer.checkpoint();
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.model, 0);
  auto restore = [](ParamSet& dst, const ParamSet& src, const char* what) {
    if (dst.size() != src.size())
      throw ShapeError(std::string("checkpoint ") + what + " parameter count mismatch");
    for (auto& p : dst) {
      const auto& s = src.at(p.name);
      if (s.value.rows() != p.value.rows() || s.value.cols() != p.value.cols())
        throw ShapeError("checkpoint parameter " + p.name + " has the wrong shape");
      p.value = s.value;
    }
  };
  restore(model.denoiser.params(), ckpt.denoiser_params, "denoiser");
  restore(model.autoencoder.params(), ckpt.autoencoder_params, "autoencoder");
  return model;
}

NoiseSchedule schedule_from_checkpoint(const Checkpoint& ckpt) {
  return NoiseSchedule(ckpt.betas, ckpt.train.sigma);
}

}  // namespace dcmd
