#include <doctest.h>

#include <dcmd/training.hpp>

#include "fixtures.hpp"
#include "support.hpp"

using namespace dcmd;

namespace {

std::vector<MotionWindow> synth_windows(int n_clips, std::uint64_t seed, int clip_len = 60) {
  SynthConfig sc;
  sc.n_clips = n_clips;
  sc.clip_len = clip_len;
  return build_windows(synth_generate(sc, seed).tracks, 3, 4, 1);
}

TrainConfig fast_config(std::uint64_t seed = 1) {
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 32;
  tc.epochs = 1;
  tc.seed = seed;
  return tc;
}

ModelConfig small_desk() {
  ModelConfig mc = desk_model_config();
  mc.denoiser.width = 16;
  mc.denoiser.heads = 2;
  mc.autoencoder.hidden = {8};
  mc.autoencoder.embedding_dim = 8;
  mc.finalize();
  return mc;
}

// Gradients of every parameter for one objective on fixed data.
std::vector<Mat> gradients(Model& model, const NoiseSchedule& sched, const Mat& motion,
                           const BatchNoise& noise, Objective kind, double lambda) {
  ag::Tape tape;
  Binder dbind(tape, model.denoiser.params());
  Binder abind(tape, model.autoencoder.params());
  auto pass = forward_pass(dbind, abind, model, sched, motion, noise, 1.0);
  tape.backward(objective(pass, kind, lambda));
  model.zero_grad();
  dbind.accumulate_grads(model.denoiser.params());
  abind.accumulate_grads(model.autoencoder.params());
  std::vector<Mat> out;
  for (auto* set : model.param_sets())
    for (const auto& p : *set) out.push_back(p.grad);
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule and config validation") {
  TrainConfig tc;
  CHECK(tc.lr_at(0) == 1e-4);
  CHECK(tc.lr_at(35) == 1e-4);
  CHECK(tc.lr_at(36) == 5e-5);
  CHECK(tc.lr_at(72) == 2.5e-5);
  tc.lr = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.beta1 = 0.5;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("presets carry the documented sizes") {
  auto p = full_model_config();
  CHECK(p.denoiser.layers == 6);
  CHECK(p.denoiser.heads == 8);
  CHECK(p.denoiser.width == 512);
  CHECK(p.denoiser.cond_dim == 256);
  CHECK(p.denoiser.seq_len == 7);
  CHECK(p.denoiser.in_dim == 34);
  CHECK(p.autoencoder.hidden == std::vector<int>{512, 256});
  auto d = desk_model_config();
  CHECK(d.denoiser.layers == 2);
  CHECK(d.denoiser.heads == 4);
  CHECK(d.denoiser.width == 64);
  TrainConfig tc;
  CHECK(tc.steps == 10);
  CHECK(tc.beta1 == 1e-4);
  CHECK(tc.betaT == 2e-2);
  CHECK(tc.lambda == 0.01);
}

TEST_CASE("diffusion steps are uniform on 1..T (chi-square)") {
  Rng rng(3);
  const int n = 100000, T = 10;
  auto steps = sample_steps(rng, n, T);
  std::vector<int> count(T + 1, 0);
  for (int t : steps) {
    REQUIRE(t >= 1);
    REQUIRE(t <= T);
    ++count[static_cast<std::size_t>(t)];
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(n) / T;
  for (int t = 1; t <= T; ++t) chi2 += std::pow(count[static_cast<std::size_t>(t)] - expect, 2) / expect;
  CHECK(chi2 < 27.88);  // 9 degrees of freedom, p = 0.001
}

TEST_CASE("forward pass terms agree with the standalone functions") {
  ModelConfig mc = test::toy_model_config();
  Model model(mc, 4);
  auto sched = build_schedule(10, 1e-4, 2e-2);
  Rng rng(5);
  Mat motion = test::smooth_motion(rng, 2, 7, 6);
  BatchNoise noise = sample_noise(rng, 2, 7, 6, 10);
  ag::Tape tape(false);
  Binder db(tape, model.denoiser.params()), ab(tape, model.autoencoder.params());
  auto pass = forward_pass(db, ab, model, sched, motion, noise, 1.0);

  double rec = 0.0, pred = 0.0;
  AssociationPair pair;
  for (int b = 0; b < 2; ++b) {
    Mat hist = motion.middleRows(b * 7, 3);
    rec += rec_loss(model.autoencoder.decode(model.autoencoder.encode(hist)), hist) / 2.0;
    Mat xt = q_sample(dct(motion.middleRows(b * 7, 7)).coeffs(), noise.steps[static_cast<std::size_t>(b)],
                      noise.eps.middleRows(b * 7, 7), sched);
    auto out = model.denoiser.forward(xt, noise.steps[static_cast<std::size_t>(b)],
                                      model.autoencoder.encode(hist));
    pred += pred_loss(noise.eps.middleRows(b * 7, 7), out.eps_pred) / 2.0;
    AssociationPair one;
    one.global = out.assoc;
    for (const auto& s : out.sigma) one.time.push_back(time_association(s));
    pair.time.insert(pair.time.end(), one.time.begin(), one.time.end());
    pair.global.insert(pair.global.end(), one.global.begin(), one.global.end());
  }
  CHECK(std::abs(pass.rec.value()(0, 0) - rec) < 1e-10);
  CHECK(std::abs(pass.pred.value()(0, 0) - pred) < 1e-12);
  // Layer-averaged UAD over both sequences equals the mean over the batch.
  CHECK(std::abs(pass.uad.value()(0, 0) - uad_norm(pair)) < 1e-12);
}

TEST_CASE("with lambda = 0 the minimax objective has the plain gradient") {
  ModelConfig mc = test::toy_model_config();
  Model model(mc, 6);
  auto sched = build_schedule(10, 1e-4, 2e-2);
  Rng rng(7);
  Mat motion = test::smooth_motion(rng, 3, 7, 6);
  BatchNoise noise = sample_noise(rng, 3, 7, 6, 10);
  auto a = gradients(model, sched, motion, noise, Objective::Minimax, 0.0);
  auto b = gradients(model, sched, motion, noise, Objective::Plain, 0.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() < 1e-14);
  auto c = gradients(model, sched, motion, noise, Objective::Minimax, 0.5);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, (a[i] - c[i]).cwiseAbs().maxCoeff());
  CHECK(diff > 0.0);
}

TEST_CASE("the minimax surrogate gradient is the sum of both phase gradients minus the shared part") {
  ModelConfig mc = test::toy_model_config(2);
  Model model(mc, 8);
  auto sched = build_schedule(10, 1e-4, 2e-2);
  Rng rng(9);
  Mat motion = test::smooth_motion(rng, 2, 7, 6);
  BatchNoise noise = sample_noise(rng, 2, 7, 6, 10);
  auto mm = gradients(model, sched, motion, noise, Objective::Minimax, 0.3);
  auto lo = gradients(model, sched, motion, noise, Objective::MinPhase, 0.3);
  auto hi = gradients(model, sched, motion, noise, Objective::MaxPhase, 0.3);
  auto base = gradients(model, sched, motion, noise, Objective::Plain, 0.0);
  for (std::size_t i = 0; i < mm.size(); ++i)
    CHECK((mm[i] - (lo[i] + hi[i] - base[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("overfit probe: one window, 500 iterations") {
  auto windows = synth_windows(1, 2);
  ModelConfig mc = desk_model_config();
  TrainConfig tc = fast_config(3);
  tc.lr = 1e-3;
  Trainer trainer(mc, tc);
  Rng rng(4);
  Mat motion = flatten(windows.at(10));
  std::vector<double> totals;
  for (int it = 0; it < 500; ++it) {
    BatchNoise noise = sample_noise(rng, 1, 7, 34, tc.steps);
    auto l = trainer.step(motion, noise, Objective::Minimax, tc.lr);
    totals.push_back(l.total);
  }
  auto avg = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += totals[i];
    return s / static_cast<double>(to - from);
  };
  // Averages over ten iterations damp the per-step noise draw.
  const double start = avg(10, 20), end = avg(490, 500);
  MESSAGE("total loss " << start << " -> " << end);
  CHECK(end <= 0.1 * start);
}

TEST_CASE("training is deterministic and resumable") {
  auto windows = synth_windows(1, 5, 40);
  ModelConfig mc = small_desk();
  TrainConfig tc = fast_config(7);
  tc.epochs = 2;
  auto a = train(windows, mc, tc);
  auto b = train(windows, mc, tc);
  CHECK(checkpoint_hash(a) == checkpoint_hash(b));
  CHECK(a.epoch == 2);
  CHECK(a.log.size() == 2);

  TrainConfig tc1 = tc;
  tc1.epochs = 1;
  auto half = train(windows, mc, tc1);
  auto cont = resume(half, windows, 1);
  CHECK(cont.epoch == 2);
  cont.train.epochs = a.train.epochs;
  CHECK(checkpoint_hash(cont) == checkpoint_hash(a));

  TrainConfig other = tc;
  other.seed = 8;
  CHECK(checkpoint_hash(train(windows, mc, other)) != checkpoint_hash(a));
}

TEST_CASE("non-finite losses name the offending term") {
  ModelConfig mc = small_desk();
  Trainer trainer(mc, fast_config());
  Rng rng(1);
  Mat motion = Mat::Zero(7, 34);
  motion(0, 0) = std::numeric_limits<double>::quiet_NaN();
  BatchNoise noise = sample_noise(rng, 1, 7, 34, 10);
  try {
    trainer.step(motion, noise, Objective::Minimax, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("loss_rec") != std::string::npos);
  }
}

TEST_CASE("shape mismatches are rejected") {
  auto windows = build_windows(synth_generate(SynthConfig{}, 1).tracks, 2, 4, 1);
  CHECK_THROWS_AS(train(windows, small_desk(), fast_config()), ShapeError);
  CHECK_THROWS_AS(train({}, small_desk(), fast_config()), ArgumentError);
}

TEST_CASE("config JSON round trip rejects unknown keys") {
  ModelConfig mc = desk_model_config();
  ModelConfig back = model_config_from_json(to_json(mc));
  CHECK(back.denoiser.width == 64);
  CHECK(back.autoencoder.hidden == mc.autoencoder.hidden);
  TrainConfig tc = fast_config(9);
  tc.lambda = 0.25;
  TrainConfig tb = train_config_from_json(to_json(tc));
  CHECK(tb.lambda == 0.25);
  CHECK(tb.seed == 9);
  CHECK_THROWS_AS(train_config_from_json("{\"lamda\": 1}"), ConfigError);
}
