#include <doctest.h>

#include <sstream>

#include <dcmd/pose_data.hpp>
#include <dcmd/training.hpp>

#include "cli.hpp"
#include "support.hpp"

using namespace dcmd;
using test::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dcmd");
  std::ostringstream out, err;
  std::vector<std::string> tail(args.begin() + 1, args.end());
  const int code = app::run_cli(tail, out, err);
  return {code, out.str(), err.str()};
}

// Small enough for a unit test; same code paths as the desk recipe.
std::vector<std::string> tiny_model() {
  return {"--preset", "desk",     "--width",  "16", "--heads",      "2",
          "--ae_hidden", "8",     "--embedding_dim", "8", "--batch_size", "64",
          "--epochs", "1",        "--clip_len", "30"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("help lists config keys with defaults") {
  auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("--lambda FLOAT [0.01]") != std::string::npos);
  CHECK(r.out.find("--branch_weight") != std::string::npos);
}

TEST_CASE("unknown config keys fail with the key name") {
  TempDir dir;
  test::write_text(dir / "cfg.json", "{\"lambda\": 0.1, \"lamda\": 0.2}");
  auto r = run({"--config", (dir / "cfg.json").string(), "synth", "--out", (dir / "o").string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("lamda") != std::string::npos);

  auto f = run({"--no_such_key", "1", "synth", "--out", (dir / "o").string()});
  CHECK(f.code != 0);
  CHECK(f.err.find("no_such_key") != std::string::npos);

  auto v = run({"--normalize", "zscore", "synth", "--out", (dir / "o").string()});
  CHECK(v.code != 0);
}

TEST_CASE("synth: deterministic, loadable, refuses a non-empty directory") {
  TempDir dir;
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  REQUIRE(run({"--seed", "7", "--n_clips", "2", "synth", "--out", a}).code == 0);
  REQUIRE(run({"--seed", "7", "--n_clips", "2", "synth", "--out", b}).code == 0);
  for (auto name : {"labels.csv", "tracks/clip_000.json", "tracks/clip_001.json"})
    CHECK(test::read_text(fs::path(a) / name) == test::read_text(fs::path(b) / name));
  CHECK(load_track_dir(fs::path(a) / "tracks").size() == 4);
  for (const auto& [clip, set] : load_labels(fs::path(a) / "labels.csv"))
    for (auto v : set.labels) CHECK(v == 0);

  auto again = run({"--seed", "7", "synth", "--out", a});
  CHECK(again.code != 0);
  CHECK(again.err.find("--force") != std::string::npos);
  CHECK(run({"--seed", "7", "synth", "--out", a, "--force"}).code == 0);
}

TEST_CASE("eval prints the worked-example AUC") {
  TempDir dir;
  test::write_text(dir / "scores.csv",
                   "clip_id,frame_idx,score,label\nc,0,0.1,0\nc,1,0.4,0\nc,2,0.35,1\nc,3,0.8,1\n");
  auto r = run({"eval", "--scores", (dir / "scores.csv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"auc\":0.75") != std::string::npos);

  test::write_text(dir / "one.csv", "clip_id,frame_idx,score,label\nc,0,0.1,1\nc,1,0.4,1\n");
  CHECK(run({"eval", "--scores", (dir / "one.csv").string()}).code != 0);
}

TEST_CASE("plot on an empty score file fails with a message") {
  TempDir dir;
  test::write_text(dir / "empty.csv", "clip_id,frame_idx,score,label\n");
  auto r = run({"plot", "--scores", (dir / "empty.csv").string(), "--out", (dir / "p").string()});
  CHECK(r.code != 0);
  CHECK_FALSE(r.err.empty());

  test::write_text(dir / "s.csv", "clip_id,frame_idx,score,label\nc,0,0.1,0\nc,1,0.4,1\n");
  auto ok = run({"plot", "--scores", (dir / "s.csv").string(), "--out", (dir / "p").string()});
  CHECK(ok.code == 0);
  CHECK(fs::exists(dir / "p" / "c.svg"));
}

TEST_CASE("train, resume and score end to end") {
  TempDir dir;
  const auto data = (dir / "data").string(), run_dir = (dir / "run").string();
  REQUIRE(run(cat(tiny_model(), {"--seed", "3", "synth", "--out", data})).code == 0);

  auto tr = run(cat(tiny_model(), {"--lambda", "0.05", "--data", data + "/tracks", "train", "--out", run_dir}));
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("lambda=0.05") != std::string::npos);
  CHECK(fs::exists(fs::path(run_dir) / "checkpoint.bin"));
  CHECK(fs::exists(fs::path(run_dir) / "train_log.csv"));
  CHECK(fs::exists(fs::path(run_dir) / "config.json"));
  CHECK(run(cat(tiny_model(), {"--data", data + "/tracks", "train", "--out", run_dir})).code != 0);

  const auto ckpt = run_dir + "/checkpoint.bin";
  auto rs = run(cat(tiny_model(), {"--epochs", "2", "--data", data + "/tracks", "train", "--out",
                                   (dir / "run2").string(), "--resume", ckpt}));
  REQUIRE(rs.code == 0);
  CHECK(rs.out.find("resumed at epoch 1") != std::string::npos);
  CHECK(rs.out.find("epoch   1") != std::string::npos);  // 0-based: the second epoch
  CHECK(rs.out.find("epoch   0") == std::string::npos);
  CHECK(load_checkpoint(dir / "run2" / "checkpoint.bin").epoch == 2);

  const auto test_data = (dir / "test").string();
  REQUIRE(run(cat(tiny_model(), {"--seed", "4", "--anomaly_rate", "0.2", "synth", "--out", test_data})).code == 0);
  auto sc = run(cat(tiny_model(), {"--samples", "2", "--data", test_data + "/tracks", "score",
                                   "--checkpoint", ckpt, "--out", (dir / "scored").string()}));
  REQUIRE(sc.code == 0);
  CHECK(fs::exists(dir / "scored" / "scores.csv"));
  CHECK(fs::exists(dir / "scored" / "window_errors.csv"));
  CHECK(fs::exists(dir / "scored" / "summary.json"));
  auto ev = run({"eval", "--scores", (dir / "scored" / "scores.csv").string()});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("\"auc\"") != std::string::npos);

  auto bad = run(cat(tiny_model(), {"--history", "2", "--data", test_data + "/tracks", "score",
                                    "--checkpoint", ckpt, "--out", (dir / "bad").string()}));
  CHECK(bad.code != 0);
  CHECK(bad.err.find("H=") != std::string::npos);
}
