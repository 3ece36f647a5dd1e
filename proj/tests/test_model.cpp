#include <doctest.h>

#include <cmath>
#include <random>

#include "semivl/gradcheck_suite.hpp"
#include "semivl/model.hpp"
#include "semivl/ops.hpp"

using namespace semivl;

namespace {

Tensor random_batch(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(Shape{rows, cols});
  for (double& v : t.storage()) v = n(rng);
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  const std::size_t w = t.size() / t.dim(0);
  Tensor out(t.shape());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = t[perm[i] * w + j];
  return out;
}

void zero_group(ParamGroup& g) {
  for (Tensor& t : g.tensors)
    for (double& v : t.storage()) v = 0.0;
}

const LayerForm kForms[] = {LayerForm::kLinear, LayerForm::kConv1d, LayerForm::kConv2d};

}  // namespace

TEST_CASE("layer form names") {
  for (LayerForm f : kForms) CHECK(parse_layer_form(to_string(f)) == f);
  CHECK_THROWS_AS(parse_layer_form("conv3d"), std::invalid_argument);
}

TEST_CASE("default architecture sizes") {
  const ArchConfig a;
  CHECK(a.latent_y == 16);
  CHECK(a.latent_z == 8);
  CHECK(a.enc_channels == std::vector<std::size_t>{16, 32, 64});
  const ModelParams p = init_params(a, 0);
  CHECK(p.enc_y.at("res1.b.w").shape() == Shape{64, 64, 3});
  CHECK(p.dec.at("fc_in.w").shape() == Shape{64 * 20, 16});
  CHECK(p.dec.at("up2.w").shape() == Shape{16, 1, 4});
  std::mt19937_64 rng(0);
  const Tensor x = random_batch(rng, 2, kWaveformLength);
  CHECK(decode(p, encode_y(p, x).mean, encode_z(p, x).mean).shape() == Shape{2, kWaveformLength});
}

TEST_CASE("architecture validation") {
  ArchConfig a = tiny_arch();
  a.res_kernel = 4;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = tiny_arch();
  a.dec_up_channels = {};
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = tiny_arch();
  a.map_rows = 9;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  a = tiny_arch();
  a.latent_rows_y = 3;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
}

TEST_CASE("init_params") {
  for (LayerForm f : kForms) {
    const ArchConfig a = tiny_arch(f, f, f);
    const ModelParams p = init_params(a, 5);
    CHECK(p == init_params(a, 5));
    CHECK_FALSE(p == init_params(a, 6));
    CHECK(p.all_finite());
    for (const ParamGroup* g : p.groups()) {
      REQUIRE(g->names.size() == g->tensors.size());
      for (std::size_t i = 0; i < g->tensors.size(); ++i) {
        const Tensor& t = g->tensors[i];
        // Fan-in recomputed from the weight shape: everything after the output axis,
        // except transposed-conv kernels whose fan-in axis comes first.
        const bool is_bias = g->names[i].ends_with(".b");
        if (is_bias) {
          for (double v : t.storage()) CHECK(v == 0.0);
          continue;
        }
        std::size_t fan_in = t.size() / t.dim(0);
        if (g->names[i].starts_with("up")) fan_in = t.size() / t.dim(1);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        CHECK(g->init_bounds[i] == doctest::Approx(bound));
        for (double v : t.storage()) CHECK(std::abs(v) <= bound);
      }
    }
  }
}

TEST_CASE("encoders: shapes, positivity, batch permutation") {
  std::mt19937_64 rng(3);
  for (LayerForm f : kForms) {
    const ArchConfig a = tiny_arch(f, LayerForm::kLinear, LayerForm::kLinear);
    const ModelParams p = init_params(a, 1);
    const Tensor x = random_batch(rng, 5, kWaveformLength);
    const GaussianCode qy = encode_y(p, x);
    const GaussianCode qz = encode_z(p, x);
    CHECK(qy.mean.shape() == Shape{5, a.latent_y});
    CHECK(qy.variance.shape() == Shape{5, a.latent_y});
    CHECK(qz.mean.shape() == Shape{5, a.latent_z});
    for (double v : qy.variance.storage()) CHECK(v > 0.0);
    for (double v : qz.variance.storage()) CHECK(v > 0.0);

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    const Tensor xp = permute_rows(x, perm);
    const GaussianCode py = encode_y(p, xp);
    const GaussianCode pz = encode_z(p, xp);
    const Tensor ey = permute_rows(qy.mean, perm);
    const Tensor ez = permute_rows(qz.variance, perm);
    for (std::size_t i = 0; i < ey.size(); ++i) CHECK(py.mean[i] == doctest::Approx(ey[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < ez.size(); ++i) CHECK(pz.variance[i] == doctest::Approx(ez[i]).epsilon(1e-12));

    const GaussianCode zero = encode_z(p, Tensor(Shape{1, kWaveformLength}, 0.0));
    CHECK(zero.mean.all_finite());
    CHECK(zero.variance.all_finite());
    CHECK_THROWS_AS(encode_y(p, Tensor(Shape{2, 156})), std::invalid_argument);
  }
}

TEST_CASE("decoder: length, prior draws, severed conditioning") {
  std::mt19937_64 rng(4);
  for (LayerForm f : kForms) {
    const ArchConfig a = tiny_arch(f, LayerForm::kLinear, LayerForm::kLinear);
    ModelParams p = init_params(a, 2);
    const Tensor y = random_batch(rng, 3, a.latent_y);
    const Tensor z = random_batch(rng, 3, a.latent_z);
    const Tensor out = decode(p, y, z);
    CHECK(out.shape() == Shape{3, kWaveformLength});
    CHECK(out.all_finite());
    CHECK_FALSE(out == decode(p, y, random_batch(rng, 3, a.latent_z)));

    // Zero style MLP: gamma = 1 and beta = 0 for every z, so z has no path to the output.
    for (const char* n : {"mlp0.w", "mlp0.b", "mlp1.w", "mlp1.b"})
      for (double& v : p.dec.at(n).storage()) v = 0.0;
    const Tensor base = decode(p, y, z);
    CHECK(base == decode(p, y, random_batch(rng, 3, a.latent_z, 3.0)));
    Graph g;
    const BoundModel m = bind(g, p, false);
    Var zv = g.parameter(z);
    g.backward(sum(decode(m, g.constant(y), zv)));
    for (double d : g.grad(zv).storage()) CHECK(d == 0.0);
  }
}

TEST_CASE("estimator head") {
  for (LayerForm f : kForms) {
    const ArchConfig a = tiny_arch(LayerForm::kConv1d, f, f);
    ModelParams p = init_params(a, 3);
    zero_group(p.est);
    p.est.at("out.b")[0] = 0.37;
    std::mt19937_64 rng(5);
    const Tensor pred = estimate_error(p, random_batch(rng, 4, a.latent_y));
    CHECK(pred.shape() == Shape{4});
    for (double v : pred.storage()) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
  }

  // Hand-set linear head: identity hidden layers in the positive region of the leaky units,
  // so the head computes 2*y0 - y1 + 0.5*y3 + 0.25.
  ArchConfig a = tiny_arch();
  a.head_hidden = a.latent_y;
  ModelParams p = init_params(a, 3);
  zero_group(p.est);
  const std::size_t d = a.latent_y;
  for (std::size_t i = 0; i < d; ++i) {
    p.est.at("fc0.w")[i * d + i] = 1.0;
    p.est.at("fc1.w")[i * d + i] = 1.0;
    p.est.at("fc0.b")[i] = 10.0;
  }
  const double w[] = {2.0, -1.0, 0.0, 0.5};
  for (std::size_t i = 0; i < d; ++i) p.est.at("out.w")[i] = w[i];
  p.est.at("out.b")[0] = 0.25 - 10.0 * (2.0 - 1.0 + 0.5);
  const Tensor y(Shape{2, 4}, {0.3, -0.2, 5.0, 1.0, -1.0, 2.0, 0.0, -4.0});
  const Tensor pred = estimate_error(p, y);
  CHECK(pred[0] == doctest::Approx(2 * 0.3 + 0.2 + 0.5 + 0.25).epsilon(1e-12));
  CHECK(pred[1] == doctest::Approx(-2.0 - 2.0 - 2.0 + 0.25).epsilon(1e-12));
}

TEST_CASE("classifier head") {
  std::mt19937_64 rng(6);
  for (LayerForm f : kForms) {
    const ArchConfig a = tiny_arch(LayerForm::kConv1d, f, f);
    const ModelParams p = init_params(a, 4);
    CHECK(classify_env(p, random_batch(rng, 3, a.latent_z)).shape() == Shape{3, a.env_classes});
  }
  const std::vector<double> s = {0.1, 2.5, -1.0};
  CHECK(argmax(s) == 1);
  CHECK(argmax(std::vector<double>{100.1, 102.5, 99.0}) == 1);
  CHECK_THROWS(argmax(std::vector<double>{}));

  // 2-class toy, z in R^2: hidden = z + 10, scores = [z0 - z1, 3 z1 + 1].
  ArchConfig a = tiny_arch();
  a.env_classes = 2;
  a.head_hidden = 2;
  ModelParams p = init_params(a, 4);
  zero_group(p.cls);
  for (std::size_t i = 0; i < 2; ++i) {
    p.cls.at("fc0.w")[i * 2 + i] = 1.0;
    p.cls.at("fc1.w")[i * 2 + i] = 1.0;
    p.cls.at("fc0.b")[i] = 10.0;
  }
  Tensor& w = p.cls.at("out.w");
  w[0] = 1.0;
  w[1] = -1.0;
  w[2] = 0.0;
  w[3] = 3.0;
  p.cls.at("out.b")[0] = 0.0;
  p.cls.at("out.b")[1] = 1.0 - 30.0;
  const Tensor scores = classify_env(p, Tensor(Shape{1, 2}, {0.5, -0.25}));
  CHECK(scores[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(scores[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("predict_error equals the head on the posterior mean") {
  const ArchConfig a = tiny_arch();
  const ModelParams p = init_params(a, 9);
  std::mt19937_64 rng(7);
  const Tensor x = random_batch(rng, 3, kWaveformLength);
  CHECK(predict_error(p, x) == estimate_error(p, encode_y(p, x).mean));
}

TEST_CASE("gradient suite: every primitive and parameter group") {
  for (const GradcheckCase& c : gradcheck_suite(7)) {
    INFO(c.name);
    CHECK(c.rel_error < 1e-4);
  }
}
