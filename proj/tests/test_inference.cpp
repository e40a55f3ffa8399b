#include <doctest.h>

#include <dcmd/inference.hpp>

#include "fixtures.hpp"
#include "support.hpp"

using namespace dcmd;

namespace {

InferenceEngine toy_engine(std::uint64_t seed = 1) {
  return InferenceEngine(Model(test::toy_model_config(2), seed), build_schedule(10, 1e-4, 2e-2));
}

}  // namespace

TEST_CASE("pad_observation repeats the last observed row") {
  Rng rng(1);
  Mat h = standard_normal(rng, 3, 5);
  Mat p = pad_observation(h, 4);
  CHECK(p.rows() == 7);
  CHECK(p.topRows(3) == h);
  for (int r = 3; r < 7; ++r) CHECK(p.row(r) == h.row(2));
  CHECK(pad_observation(h, 0) == h);
  Mat c = Mat::Constant(3, 5, 2.0);
  CHECK(pad_observation(c, 4) == Mat::Constant(7, 5, 2.0));
}

TEST_CASE("mask_complete splices in the time domain") {
  Rng rng(2);
  CompletionState s;
  s.mask = history_mask(3, 4, 6);
  s.noised = dct(standard_normal(rng, 7, 6));
  s.denoised = s.noised;
  CHECK((mask_complete(s).coeffs() - s.noised.coeffs()).cwiseAbs().maxCoeff() < 1e-10);

  s.denoised = dct(standard_normal(rng, 7, 6));
  CompletionState all = s;
  all.mask = Mat::Ones(7, 6);
  CHECK((mask_complete(all).coeffs() - s.noised.coeffs()).cwiseAbs().maxCoeff() < 1e-10);

  Mat out = idct(mask_complete(s));
  CHECK((out.topRows(3) - idct(s.noised).topRows(3)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((out.bottomRows(4) - idct(s.denoised).bottomRows(4)).cwiseAbs().maxCoeff() < 1e-10);

  s.mask = history_mask(3, 3, 6);
  CHECK_THROWS_AS(mask_complete(s), ShapeError);
}

TEST_CASE("unloaded engine and bad inputs") {
  InferenceEngine none;
  CHECK_FALSE(none.loaded());
  CHECK_THROWS_AS(none.sample_future(Mat::Zero(3, 6), 1, std::uint64_t{1}), StateError);
  auto e = toy_engine();
  CHECK(e.loaded());
  CHECK_THROWS_AS(e.sample_future(Mat::Zero(2, 6), 1, std::uint64_t{1}), ShapeError);
  CHECK_THROWS_AS(e.sample_future(Mat::Zero(3, 6), 0, std::uint64_t{1}), ArgumentError);
  CHECK(sampler_init_from_string(to_string(SamplerInit::Gaussian)) == SamplerInit::Gaussian);
  CHECK_THROWS_AS(sampler_init_from_string("zeros"), ConfigError);
}

TEST_CASE("sampling: shapes, seed dependence, reproducibility") {
  auto e = toy_engine();
  Rng rng(3);
  Mat h = standard_normal(rng, 3, 6) * 0.2;
  for (auto init : {SamplerInit::Gaussian, SamplerInit::NoisedObservation}) {
    e.set_sampler_init(init);
    auto a = e.sample_future(h, 3, std::uint64_t{1});
    auto b = e.sample_future(h, 3, std::uint64_t{1});
    auto c = e.sample_future(h, 3, std::uint64_t{2});
    REQUIRE(a.size() == 3);
    CHECK(a[0].rows() == 4);
    CHECK(a[0].cols() == 6);
    for (std::size_t k = 0; k < 3; ++k) CHECK(a[k] == b[k]);
    CHECK((a[0] - c[0]).cwiseAbs().maxCoeff() > 1e-6);
    CHECK((a[0] - a[1]).cwiseAbs().maxCoeff() > 1e-6);
  }
}

TEST_CASE("every reverse step keeps the noised observation's history rows") {
  auto e = toy_engine(4);
  Rng rng(5);
  Mat h = standard_normal(rng, 3, 6);
  std::vector<int> seen;
  e.sample_future(h, 2, std::uint64_t{6}, [&](int t, const Mat& noised, const Mat& completed) {
    seen.push_back(t);
    Mat xn = idct_blocks(noised, 7), xc = idct_blocks(completed, 7);
    for (int b = 0; b < 2; ++b)
      CHECK((xc.middleRows(b * 7, 3) - xn.middleRows(b * 7, 3)).cwiseAbs().maxCoeff() < 1e-8);
  });
  REQUIRE(seen.size() == 11);
  CHECK(seen.front() == 10);
  CHECK(seen.back() == 0);
}

TEST_CASE("window errors and concurrent scoring") {
  ModelConfig mc = desk_model_config();
  mc.denoiser.width = 16;
  mc.autoencoder.hidden = {8};
  mc.autoencoder.embedding_dim = 8;
  mc.finalize();
  InferenceEngine e(Model(mc, 7), build_schedule(10, 1e-4, 2e-2));
  SynthConfig sc;
  sc.clip_len = 20;
  auto tracks = synth_generate(sc, 1).tracks;
  auto windows = build_windows(tracks, 3, 4, 3);
  REQUIRE(windows.size() >= 4);

  auto one = e.window_errors(windows[0], 3, 11);
  CHECK(one.pred_errs.size() == 3);
  CHECK(one.rec_err >= 0.0);
  CHECK(one.history == 3);
  CHECK(one.future == 4);
  auto again = e.window_errors(windows[0], 3, 11);
  CHECK(again.pred_errs == one.pred_errs);
  CHECK(again.rec_err == one.rec_err);

  auto serial = score_windows(e, windows, 2, 5, 1);
  auto parallel = score_windows(e, windows, 2, 5, 3);
  REQUIRE(serial.size() == windows.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].start_frame == windows[i].start_frame);
    CHECK(serial[i].pred_errs == parallel[i].pred_errs);
  }

  auto short_windows = build_windows(tracks, 2, 4, 3);
  CHECK_THROWS_AS(e.window_errors(short_windows.at(0), 1, 1), ShapeError);
  CHECK(window_id(windows[0]) != window_id(windows[1]));
}

TEST_CASE("overfit on one window shrinks both errors") {
  ModelConfig mc = desk_model_config();
  mc.denoiser.width = 32;
  mc.denoiser.heads = 2;
  mc.autoencoder.hidden = {16};
  mc.autoencoder.embedding_dim = 16;
  mc.finalize();
  TrainConfig tc;
  tc.lr = 2e-3;
  tc.seed = 3;
  SynthConfig sc;
  sc.clip_len = 20;
  auto window = build_windows(synth_generate(sc, 2).tracks, 3, 4, 1).at(5);

  InferenceEngine fresh(Model(mc, tc.seed), build_schedule(10, 1e-4, 2e-2));
  const auto before = fresh.window_errors(window, 3, 1);

  Trainer trainer(mc, tc);
  Rng rng(4);
  const Mat motion = flatten(window);
  for (int it = 0; it < 1500; ++it)
    trainer.step(motion, sample_noise(rng, 1, 7, 34, tc.steps), Objective::Minimax,
                 it < 1000 ? tc.lr : tc.lr / 4);
  InferenceEngine engine(trainer.model(), trainer.schedule());
  const auto after = engine.window_errors(window, 3, 1);
  const double pred_before = *std::min_element(before.pred_errs.begin(), before.pred_errs.end());
  const double pred_after = *std::min_element(after.pred_errs.begin(), after.pred_errs.end());
  MESSAGE("rec " << before.rec_err << " -> " << after.rec_err << ", pred " << pred_before << " -> "
                 << pred_after);
  CHECK(after.rec_err < 0.02 * before.rec_err);
  CHECK(after.rec_err < 1e-2);
  CHECK(pred_after < 0.8 * pred_before);
}
