#include <doctest.h>

#include <dcmd/denoiser.hpp>

#include "support.hpp"

using namespace dcmd;

namespace {

DenoiserConfig toy(int layers = 1, int heads = 2, int width = 8) {
  DenoiserConfig c;
  c.layers = layers;
  c.heads = heads;
  c.width = width;
  c.cond_dim = 5;
  c.seq_len = 7;
  c.in_dim = 6;
  return c;
}

Mat layer_norm_oracle(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + 1e-5);
  }
  return out;
}

void set(Denoiser& d, const std::string& name, const Mat& value) {
  auto& p = d.params().at(name);
  REQUIRE(p.value.rows() == value.rows());
  REQUIRE(p.value.cols() == value.cols());
  p.value = value;
}

}  // namespace

TEST_CASE("time embedding values") {
  RowVec e0 = time_embedding(0, 8);
  for (int i = 0; i < 8; ++i) CHECK(e0(i) == (i % 2 ? 1.0 : 0.0));
  RowVec e5 = time_embedding(5, 8);
  const double expect[8] = {std::sin(5.0),   std::cos(5.0),   std::sin(0.5),   std::cos(0.5),
                            std::sin(0.05),  std::cos(0.05),  std::sin(0.005), std::cos(0.005)};
  for (int i = 0; i < 8; ++i) CHECK(std::abs(e5(i) - expect[i]) < 1e-12);
  for (int t : {1, 17, 1000}) CHECK(time_embedding(t, 64).cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(time_embedding(-1, 8), ArgumentError);
}

TEST_CASE("attention: uniform on zero input, stochastic rows") {
  Denoiser d(toy(), 1);
  auto out = d.attention(Mat::Zero(7, 8), 0);
  REQUIRE(out.assoc.size() == 2);
  for (const auto& g : out.assoc) CHECK((g.array() - 1.0 / 7.0).abs().maxCoeff() < 1e-15);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto o = d.attention(standard_normal(rng, 7, 8) * 3.0, 0);
    for (const auto& g : o.assoc) CHECK((g.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention: 2x2 softmax hand oracle") {
  DenoiserConfig c = toy(1, 1, 2);
  c.seq_len = 2;
  Denoiser d(c, 1);
  set(d, "block0.attn.wq", Mat::Identity(2, 2));
  set(d, "block0.attn.wk", Mat::Identity(2, 2));
  Mat x(2, 2);
  x << 1.0, 0.0, 0.0, 2.0;
  auto g = d.attention(x, 0).assoc.at(0);
  // Logits x x^T / sqrt(2 D) with D = 2.
  const double a = 1.0 / 2.0, b = 4.0 / 2.0;
  CHECK(std::abs(g(0, 0) - std::exp(a) / (std::exp(a) + 1.0)) < 1e-15);
  CHECK(std::abs(g(0, 1) - 1.0 / (std::exp(a) + 1.0)) < 1e-15);
  CHECK(std::abs(g(1, 0) - 1.0 / (1.0 + std::exp(b))) < 1e-15);
  CHECK(std::abs(g(1, 1) - std::exp(b) / (1.0 + std::exp(b))) < 1e-15);
}

TEST_CASE("FiLM: identity modulation, annihilation, element-wise oracle") {
  const int D = 8;
  Denoiser d(toy(), 3);
  Rng rng(4);
  Mat x = standard_normal(rng, 7, D);
  RowVec cond = standard_normal(rng, 1, D);

  set(d, "block0.film0.wg", Mat::Zero(D, D));
  set(d, "block0.film0.bg", Mat::Ones(1, D));
  set(d, "block0.film0.wb", Mat::Zero(D, D));
  set(d, "block0.film0.bb", Mat::Zero(1, D));
  CHECK((d.film(x, cond, 0, 0) - layer_norm_oracle(x)).cwiseAbs().maxCoeff() < 1e-12);

  set(d, "block0.film0.bg", Mat::Zero(1, D));
  CHECK(d.film(x, cond, 0, 0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.film(standard_normal(rng, 7, D) * 50.0, cond, 0, 0).cwiseAbs().maxCoeff() == 0.0);

  const Mat wg = standard_normal(rng, D, D), bg = standard_normal(rng, 1, D);
  const Mat wb = standard_normal(rng, D, D), bb = standard_normal(rng, 1, D);
  set(d, "block0.film1.wg", wg);
  set(d, "block0.film1.bg", bg);
  set(d, "block0.film1.wb", wb);
  set(d, "block0.film1.bb", bb);
  const RowVec gamma = cond * wg + bg, beta = cond * wb + bb;
  Mat expect = layer_norm_oracle(x);
  for (Eigen::Index r = 0; r < expect.rows(); ++r)
    expect.row(r) = expect.row(r).cwiseProduct(gamma) + beta;
  CHECK((d.film(x, cond, 0, 1) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("block: shapes, positive sigma, zeroed-path composition") {
  DenoiserConfig c = toy(1, 2, 4);
  c.seq_len = 2;
  Denoiser d(c, 5);
  Rng rng(6);
  Mat x = standard_normal(rng, 2, 4);
  RowVec te = time_embedding(3, 4), u = standard_normal(rng, 1, 4);
  auto out = d.block_forward(x, te, u, 0);
  CHECK(out.y.rows() == 2);
  CHECK(out.y.cols() == 4);
  CHECK(out.sigma.rows() == 2);
  CHECK(out.sigma.cols() == 2);
  CHECK(out.sigma.minCoeff() > 0.0);

  for (auto name : {"wq", "wk", "wv", "wo"}) set(d, std::string("block0.attn.") + name, Mat::Zero(4, 4));
  set(d, "block0.attn.bo", Mat::Zero(1, 4));
  set(d, "block0.ffn.w1", Mat::Zero(4, 16));
  set(d, "block0.ffn.b1", Mat::Zero(1, 16));
  set(d, "block0.ffn.w2", Mat::Zero(16, 4));
  set(d, "block0.ffn.b2", Mat::Zero(1, 4));
  const RowVec cond = te + u;
  Mat cond_rows = cond.replicate(2, 1);
  Mat expect = d.film(cond_rows, cond, 0, 1) + d.film(cond_rows, cond, 0, 0) + x;
  CHECK((d.block_forward(x, te, u, 0).y - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward: shapes, association structure, determinism") {
  Denoiser d(toy(2, 2, 8), 7);
  Rng rng(8);
  Mat xt = standard_normal(rng, 7, 6);
  RowVec u = standard_normal(rng, 1, 5);
  auto out = d.forward(xt, 4, u);
  CHECK(out.eps_pred.rows() == 7);
  CHECK(out.eps_pred.cols() == 6);
  REQUIRE(out.assoc.size() == 2);
  for (const auto& layer : out.assoc) {
    REQUIRE(layer.size() == 2);
    for (const auto& g : layer) {
      CHECK(g.rows() == 7);
      CHECK((g.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
  }
  CHECK(d.forward(xt, 4, u).eps_pred == out.eps_pred);
  CHECK_THROWS_AS(d.forward(Mat::Zero(6, 6), 4, u), ArgumentError);
  CHECK_THROWS_AS(d.forward(xt, 4, RowVec::Zero(4)), ArgumentError);
}

TEST_CASE("forward: L=1 equals the composition of its parts") {
  Denoiser d(toy(1, 2, 8), 9);
  Rng rng(10);
  for (auto& p : d.params()) p.value = standard_normal(rng, p.value.rows(), p.value.cols()) * 0.3;
  Mat xt = standard_normal(rng, 7, 6);
  RowVec u = standard_normal(rng, 1, 5);
  const auto& P = d.params();
  Mat h = xt * P.at("in.w").value + P.at("in.b").value.replicate(7, 1) + P.at("pos").value;
  const RowVec te = time_embedding(6, 8);
  auto blk = d.block_forward(h, te, d.project_condition(u), 0);
  Mat expect = blk.y * P.at("out.w").value + P.at("out.b").value.replicate(7, 1);
  auto out = d.forward(xt, 6, u);
  CHECK((out.eps_pred - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out.sigma[0] - blk.sigma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batched forward equals per-sequence forward") {
  Denoiser d(toy(2, 2, 8), 11);
  Rng rng(12);
  const int batch = 3;
  Mat xt = standard_normal(rng, batch * 7, 6);
  Mat u = standard_normal(rng, batch, 5);
  std::vector<int> steps = {1, 5, 10};
  ag::Tape tape(false);
  Binder bind(tape, d.params());
  auto vars = d.forward(bind, tape.constant(xt), steps, tape.constant(u), batch);
  for (int b = 0; b < batch; ++b) {
    auto one = d.forward(xt.middleRows(b * 7, 7), steps[static_cast<std::size_t>(b)], u.row(b));
    CHECK((vars.eps_pred.value().middleRows(b * 7, 7) - one.eps_pred).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("eps_pred is equivariant to a tied permutation of feature columns") {
  Denoiser d(toy(2, 2, 8), 13);
  Rng rng(14);
  Mat xt = standard_normal(rng, 7, 6);
  RowVec u = standard_normal(rng, 1, 5);
  const Mat base = d.forward(xt, 3, u).eps_pred;

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  Mat P = Mat(perm);
  Denoiser q = d;
  q.params().at("in.w").value = P.transpose() * d.params().at("in.w").value;
  q.params().at("out.w").value = d.params().at("out.w").value * P;
  q.params().at("out.b").value = d.params().at("out.b").value * P;
  Mat permuted = q.forward(xt * P, 3, u).eps_pred;
  CHECK((permuted - base * P).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameter groups for the stop-gradient phases") {
  Denoiser d(toy(2, 2, 8), 15);
  auto sig = d.sigma_head_params();
  CHECK(sig.size() == 4);
  for (int i : sig) CHECK(d.params()[i].name.find("sigma") != std::string::npos);
  auto qk = d.query_key_params(1);
  CHECK(d.params()[qk[0]].name == "block1.attn.wq");
  CHECK(d.params()[qk[1]].name == "block1.attn.wk");
}

TEST_CASE("config validation") {
  DenoiserConfig c = toy();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy();
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(toy().effective_attn_scale() == doctest::Approx(4.0));
}
