#include <doctest.h>

#include <dcmd/training.hpp>

#include "fixtures.hpp"
#include "support.hpp"

using namespace dcmd;
using test::TempDir;

namespace {

Checkpoint small_checkpoint(std::uint64_t seed = 1) {
  SynthConfig sc;
  sc.clip_len = 30;
  auto windows = build_windows(synth_generate(sc, seed).tracks, 3, 4, 2);
  ModelConfig mc = desk_model_config();
  mc.denoiser.width = 16;
  mc.autoencoder.hidden = {8};
  mc.autoencoder.embedding_dim = 8;
  mc.finalize();
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 1;
  tc.lr = 1e-3;
  tc.seed = seed;
  return train(windows, mc, tc);
}

}  // namespace

TEST_CASE("save, load and save again give identical bytes and parameters") {
  TempDir dir;
  Checkpoint ck = small_checkpoint();
  save_checkpoint(ck, dir / "a.bin");
  Checkpoint back = load_checkpoint(dir / "a.bin");
  save_checkpoint(back, dir / "b.bin");
  CHECK(test::read_text(dir / "a.bin") == test::read_text(dir / "b.bin"));

  REQUIRE(back.denoiser_params.size() == ck.denoiser_params.size());
  for (int i = 0; i < ck.denoiser_params.size(); ++i) {
    CHECK(back.denoiser_params[i].name == ck.denoiser_params[i].name);
    CHECK(back.denoiser_params[i].value == ck.denoiser_params[i].value);
  }
  for (int i = 0; i < ck.autoencoder_params.size(); ++i)
    CHECK(back.autoencoder_params[i].value == ck.autoencoder_params[i].value);
  CHECK(back.betas == ck.betas);
  CHECK(back.epoch == ck.epoch);
  CHECK(back.adam_steps == ck.adam_steps);
  CHECK(back.rng_state == ck.rng_state);
  CHECK(back.log.size() == ck.log.size());
  CHECK(back.model.denoiser.width == 16);
  CHECK(checkpoint_hash(back) == checkpoint_hash(ck));
}

TEST_CASE("truncated, corrupted and mismatched files are rejected") {
  TempDir dir;
  const std::string bytes = serialize_checkpoint(small_checkpoint());
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    test::write_text(dir / "t.bin", bytes.substr(0, cut));
    CHECK_THROWS_AS(load_checkpoint(dir / "t.bin"), CorruptionError);
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), CorruptionError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), CorruptionError);

  std::string version = bytes;
  version[8] = static_cast<char>(99);
  CHECK_THROWS_AS(deserialize_checkpoint(version), CorruptionError);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST_CASE("model and schedule rebuild from a checkpoint") {
  Checkpoint ck = small_checkpoint(2);
  Model m = model_from_checkpoint(ck);
  CHECK(m.denoiser.params().size() == ck.denoiser_params.size());
  CHECK(m.denoiser.params()[0].value == ck.denoiser_params[0].value);
  auto sched = schedule_from_checkpoint(ck);
  CHECK(sched.betas() == ck.betas);
}

TEST_CASE("training log CSV") {
  TempDir dir;
  Checkpoint ck = small_checkpoint(3);
  write_training_log(dir / "log.csv", ck.log);
  const std::string text = test::read_text(dir / "log.csv");
  CHECK(text.rfind("epoch,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + static_cast<long>(ck.log.size()));
}
