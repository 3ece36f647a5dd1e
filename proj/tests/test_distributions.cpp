#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "semivl/distributions.hpp"
#include "semivl/gradcheck.hpp"
#include "semivl/ops.hpp"

using namespace semivl;

namespace {

GaussianCode code1(double mean, double var) { return {Tensor::vector({mean}), Tensor::vector({var})}; }

// Monte-Carlo KL: mean of log q(s) - log p(s) over antithetic draws s = mu +- sd * e.
double mc_kl(const GaussianCode& c, double prior_var, std::size_t samples, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < c.mean.size(); ++i) {
    const double mu = c.mean[i], var = c.variance[i], sd = std::sqrt(var);
    double acc = 0.0;
    for (std::size_t k = 0; k < samples / 2; ++k) {
      const double e = n(rng);
      for (double s : {mu + sd * e, mu - sd * e}) {
        const double log_q = -0.5 * std::log(2 * std::numbers::pi * var) - (s - mu) * (s - mu) / (2 * var);
        const double log_p = -0.5 * std::log(2 * std::numbers::pi * prior_var) - s * s / (2 * prior_var);
        acc += log_q - log_p;
      }
    }
    total += acc / static_cast<double>(2 * (samples / 2));
  }
  return total;
}

}  // namespace

TEST_CASE("kl examples") {
  CHECK(kl_gaussian_diag(code1(0.0, 1.0), 1.0) == doctest::Approx(0.0));
  CHECK(std::abs(kl_gaussian_diag(code1(0.0, 0.3), 0.3)) < 1e-12);
  CHECK(kl_gaussian_diag(code1(1.0, 1.0), 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(kl_gaussian_diag(code1(0.0, 2.0), 1.0) == doctest::Approx(0.5 * (2.0 - 1.0 - std::log(2.0))).epsilon(1e-14));
  CHECK(kl_gaussian_diag(code1(0.0, 2.0), 1.0) == doctest::Approx(0.15343).epsilon(1e-4));
  std::mt19937_64 rng(1);
  CHECK(std::abs(mc_kl(code1(1.0, 1.0), 1.0, 1'000'000, rng) - 0.5) < 1e-2);
  CHECK(std::abs(mc_kl(code1(0.0, 2.0), 1.0, 1'000'000, rng) - 0.15343) < 1e-2);
}

TEST_CASE("kl is non-negative and zero only at the prior") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> m(-2.0, 2.0), v(0.1, 4.0), e(0.2, 3.0);
  for (int i = 0; i < 2000; ++i) {
    GaussianCode c{Tensor(Shape{3}), Tensor(Shape{3})};
    for (double& x : c.mean.storage()) x = m(rng);
    for (double& x : c.variance.storage()) x = v(rng);
    CHECK(kl_gaussian_diag(c, e(rng)) >= 0.0);
  }
  CHECK(kl_gaussian_diag(code1(1e-3, 1.0), 1.0) > 0.0);
  CHECK(kl_gaussian_diag(code1(0.0, 1.001), 1.0) > 0.0);
}

TEST_CASE("graph kl matches the value form") {
  GaussianCode c{Tensor(Shape{2, 2}, {0.3, -1.0, 2.0, 0.0}), Tensor(Shape{2, 2}, {0.5, 1.5, 2.0, 0.2})};
  Graph g;
  const double a = kl_gaussian_diag(GaussianCodeVar{g.constant(c.mean), g.constant(c.variance)}, 0.7).value().item();
  CHECK(a == doctest::Approx(kl_gaussian_diag(c, 0.7)).epsilon(1e-13));
}

TEST_CASE("kl input validation") {
  CHECK_THROWS_AS(kl_gaussian_diag(code1(0.0, 0.0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(kl_gaussian_diag(code1(0.0, 1.0), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(kl_gaussian_diag(GaussianCode{Tensor::vector({0, 0}), Tensor::vector({1})}, 1.0),
                  std::invalid_argument);
}

TEST_CASE("reparameterize") {
  CHECK(reparameterize(code1(1.5, 3.0), NoiseDraw{Tensor::vector({0.0})})[0] == 1.5);
  CHECK(reparameterize(code1(2.0, 4.0), NoiseDraw{Tensor::vector({1.0})})[0] == 4.0);

  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t count = 100000;
  const GaussianCode c = code1(-0.7, 2.5);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double x = reparameterize(c, NoiseDraw{Tensor::vector({n(rng)})})[0];
    s1 += x;
    s2 += x * x;
  }
  const double mean = s1 / count;
  const double var = s2 / count - mean * mean;
  CHECK(std::abs(mean - (-0.7)) < 3.0 * std::sqrt(2.5 / count));
  CHECK(std::abs(var - 2.5) < 3.0 * 2.5 * std::sqrt(2.0 / (count - 1)));
}

TEST_CASE("reparameterize gradients") {
  const Tensor mu = Tensor::vector({0.4, -1.2});
  const Tensor var = Tensor::vector({0.8, 2.2});
  const Tensor eps = Tensor::vector({1.3, -0.6});
  Graph g;
  Var m = g.parameter(mu), v = g.parameter(var);
  g.backward(sum(reparameterize(GaussianCodeVar{m, v}, g.constant(eps))));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(g.grad(m)[i] == 1.0);
    CHECK(g.grad(v)[i] == doctest::Approx(eps[i] / (2.0 * std::sqrt(var[i]))).epsilon(1e-14));
  }
  auto f = [&](const Tensor& vv) {
    double s = 0.0;
    const Tensor out = reparameterize(GaussianCode{mu, vv}, NoiseDraw{eps});
    for (double x : out.storage()) s += x;
    return s;
  };
  CHECK(relative_error(g.grad(v), finite_diff_grad(f, var)) < 1e-8);
}

TEST_CASE("gaussian log-likelihood") {
  const std::vector<double> x = {0.5};
  CHECK(gaussian_log_likelihood(x, x, 1.0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(gaussian_log_likelihood(x, x, 1.0) == doctest::Approx(-0.91894).epsilon(1e-5));

  const std::vector<double> a = {1.0, -2.0, 0.5};
  const std::vector<double> b = {0.0, -1.0, 1.5};
  std::vector<double> far(3);
  for (int i = 0; i < 3; ++i) far[i] = a[i] + std::sqrt(2.0) * (b[i] - a[i]);
  const double old_sq = 3.0;
  // Doubling the squared distance lowers the value by (2*old - old) / 2.
  CHECK(gaussian_log_likelihood(a, b, 1.0) - gaussian_log_likelihood(a, far, 1.0) ==
        doctest::Approx(old_sq / 2.0).epsilon(1e-12));

  // Maximum and zero gradient at x_hat = x.
  Graph g;
  Var xv = g.constant(Tensor(Shape{1, 3}, a));
  Var xh = g.parameter(Tensor(Shape{1, 3}, a));
  g.backward(gaussian_log_likelihood(xv, xh, 0.4));
  for (double d : g.grad(xh).storage()) CHECK(d == 0.0);
  CHECK(gaussian_log_likelihood(a, a, 0.4) > gaussian_log_likelihood(a, b, 0.4));
  CHECK_THROWS_AS(gaussian_log_likelihood(a, std::vector<double>{1.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_log_likelihood(a, b, 0.0), std::invalid_argument);
}
