#include "semivl/gradcheck_suite.hpp"

#include <functional>

#include "semivl/gradcheck.hpp"
#include "semivl/loss.hpp"
#include "semivl/ops.hpp"
#include "semivl/rng.hpp"

namespace semivl {

ArchConfig tiny_arch(LayerForm ae, LayerForm est, LayerForm cls) {
  ArchConfig a;
  a.latent_y = 4;
  a.latent_z = 2;
  a.enc_channels = {2, 2};
  a.res_blocks = 1;
  a.dec_channels = 2;
  a.dec_up_channels = {2, 2};
  a.dec_res_blocks = 1;
  a.adain_hidden = 3;
  a.linear_hidden = 4;
  a.head_hidden = 3;
  a.head_channels = 2;
  a.latent_rows_y = 2;
  a.latent_rows_z = 1;
  a.env_classes = 3;
  a.ae_form = ae;
  a.est_form = est;
  a.cls_form = cls;
  return a;
}

namespace {

using OpFn = std::function<Var(const std::vector<Var>&)>;

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

// Scalarizes the op output with fixed random weights, then compares gradients for every input.
void check_op(std::vector<GradcheckCase>& out, const std::string& name, const std::vector<Tensor>& inputs,
              const OpFn& fn, Rng& rng) {
  Tensor weights;
  {
    Graph g;
    std::vector<Var> vs;
    for (const Tensor& t : inputs) vs.push_back(g.constant(t));
    weights = random_tensor(rng, fn(vs).shape());
  }
  auto scalar = [&](Graph& g, const std::vector<Var>& vs) { return sum(mul(fn(vs), g.constant(weights))); };

  Graph g;
  std::vector<Var> vs;
  for (const Tensor& t : inputs) vs.push_back(g.parameter(t));
  g.backward(scalar(g, vs));

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto f = [&](const Tensor& xi) {
      Graph h;
      std::vector<Var> ws;
      for (std::size_t j = 0; j < inputs.size(); ++j) ws.push_back(h.constant(j == i ? xi : inputs[j]));
      return scalar(h, ws).value().item();
    };
    const Tensor numeric = finite_diff_grad(f, inputs[i]);
    const std::string label = inputs.size() > 1 ? name + "/arg" + std::to_string(i) : name;
    out.push_back({label, relative_error(g.grad(vs[i]), numeric)});
  }
}

void primitive_cases(std::vector<GradcheckCase>& out, Rng& rng) {
  auto r = [&](Shape s) { return random_tensor(rng, std::move(s)); };
  auto pos = [&](Shape s) { return random_tensor(rng, std::move(s), 0.5, 2.0); };

  check_op(out, "add", {r({2, 3}), r({2, 3})}, [](auto& v) { return add(v[0], v[1]); }, rng);
  check_op(out, "sub", {r({2, 3}), r({2, 3})}, [](auto& v) { return sub(v[0], v[1]); }, rng);
  check_op(out, "mul", {r({2, 3}), r({2, 3})}, [](auto& v) { return mul(v[0], v[1]); }, rng);
  check_op(out, "scale", {r({4})}, [](auto& v) { return scale(v[0], -1.7); }, rng);
  check_op(out, "add_scalar", {r({4})}, [](auto& v) { return add_scalar(v[0], 0.3); }, rng);
  check_op(out, "square", {r({5})}, [](auto& v) { return square(v[0]); }, rng);
  check_op(out, "exp", {r({5})}, [](auto& v) { return exp(v[0]); }, rng);
  check_op(out, "log", {pos({5})}, [](auto& v) { return log(v[0]); }, rng);
  check_op(out, "sqrt", {pos({5})}, [](auto& v) { return sqrt(v[0]); }, rng);
  check_op(out, "relu", {r({6})}, [](auto& v) { return relu(v[0]); }, rng);
  check_op(out, "leaky_relu", {r({6})}, [](auto& v) { return leaky_relu(v[0], 0.2); }, rng);
  check_op(out, "sum", {r({2, 3})}, [](auto& v) { return sum(v[0]); }, rng);
  check_op(out, "mean", {r({2, 3})}, [](auto& v) { return mean(v[0]); }, rng);
  check_op(out, "reshape", {r({2, 6})}, [](auto& v) { return reshape(v[0], Shape{3, 4}); }, rng);
  check_op(out, "slice_last", {r({2, 7})}, [](auto& v) { return slice_last(v[0], 2, 5); }, rng);
  check_op(out, "resize_last/crop", {r({2, 7})}, [](auto& v) { return resize_last(v[0], 4); }, rng);
  check_op(out, "resize_last/pad", {r({2, 3})}, [](auto& v) { return resize_last(v[0], 5); }, rng);
  check_op(out, "select_rows", {r({4, 3})}, [](auto& v) { return select_rows(v[0], {3, 1, 3}); }, rng);
  check_op(out, "dense", {r({3, 4}), r({2, 4}), r({2})}, [](auto& v) { return dense(v[0], v[1], v[2]); }, rng);
  check_op(out, "strided_conv/1d", {r({2, 2, 11}), r({3, 2, 4}), r({3})},
           [](auto& v) { return strided_conv(v[0], v[1], v[2], ConvSpec{2, 0}, 1); }, rng);
  check_op(out, "strided_conv/1d-pad", {r({2, 9}), r({2, 2, 3}), r({2})},
           [](auto& v) { return strided_conv(v[0], v[1], v[2], ConvSpec{1, 1}, 1); }, rng);
  check_op(out, "strided_conv/2d", {r({2, 2, 5, 6}), r({3, 2, 3, 3}), r({3})},
           [](auto& v) { return strided_conv(v[0], v[1], v[2], ConvSpec{2, 1}, 2); }, rng);
  check_op(out, "conv_transpose/1d", {r({2, 2, 5}), r({2, 3, 4}), r({3})},
           [](auto& v) { return conv_transpose(v[0], v[1], v[2], ConvSpec{2, 0}, 1); }, rng);
  check_op(out, "conv_transpose/2d", {r({2, 2, 3, 4}), r({2, 1, 3, 3}), r({1})},
           [](auto& v) { return conv_transpose(v[0], v[1], v[2], ConvSpec{2, 1}, 2); }, rng);
  check_op(out, "global_avg_pool", {r({2, 3, 5})}, [](auto& v) { return global_avg_pool(v[0]); }, rng);
  check_op(out, "adain", {r({2, 3, 6}), r({2, 3}), r({2, 3})},
           [](auto& v) { return adain(v[0], v[1], v[2]); }, rng);
  check_op(out, "adain/unbatched", {r({3, 6}), r({3}), r({3})},
           [](auto& v) { return adain(v[0], v[1], v[2]); }, rng);
  check_op(out, "kl_gaussian_diag", {r({2, 3}), pos({2, 3})},
           [](auto& v) { return kl_gaussian_diag(GaussianCodeVar{v[0], v[1]}, 1.5); }, rng);
  check_op(out, "reparameterize", {r({2, 3}), pos({2, 3}), r({2, 3})},
           [](auto& v) { return reparameterize(GaussianCodeVar{v[0], v[1]}, v[2]); }, rng);
  check_op(out, "gaussian_log_likelihood", {r({2, 5}), r({2, 5})},
           [](auto& v) { return gaussian_log_likelihood(v[0], v[1], 0.7); }, rng);
}

void end_to_end_case(std::vector<GradcheckCase>& out, const ArchConfig& arch, std::uint64_t seed, Rng& rng) {
  // Nonzero biases keep relu inputs off the kink, where one-sided slopes disagree.
  ModelParams params = init_params(arch, seed);
  for (ParamGroup* group : params.groups()) {
    for (std::size_t ti = 0; ti < group->tensors.size(); ++ti) {
      if (group->init_bounds[ti] != 0.0) continue;
      for (double& v : group->tensors[ti].storage()) v = rng.uniform(-0.1, 0.1);
    }
  }
  LossConfig cfg;
  cfg.mc_samples = 2;
  cfg.obs_var = 0.5;
  LossBatch batch;
  batch.waveforms = random_tensor(rng, Shape{3, kWaveformLength});
  batch.labels.rows = {0, 2};
  batch.labels.range_error = {0.4, -0.1};
  batch.labels.env_label = {1, 2};
  const auto noise = draw_noise(rng, 3, arch.latent_y, arch.latent_z, cfg.mc_samples);

  Graph g;
  const BoundModel model = bind(g, params, true);
  g.backward(total_loss(model, batch, noise, cfg).total);
  const std::vector<Tensor> grads = gradients(g, model);

  const std::string form = "ae=" + std::string(to_string(arch.ae_form)) + ",est=" +
                           std::string(to_string(arch.est_form)) + ",cls=" + std::string(to_string(arch.cls_form));
  std::size_t offset = 0;
  ModelParams probe = params;
  auto probe_groups = probe.groups();
  const auto groups = params.groups();
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const ParamGroup& group = *groups[gi];
    std::vector<double> analytic, numeric;
    for (std::size_t ti = 0; ti < group.tensors.size(); ++ti) {
      Tensor& slot = probe_groups[gi]->tensors[ti];
      auto f = [&](const Tensor& t) {
        slot = t;
        return total_loss(probe, batch, noise, cfg).total;
      };
      const Tensor fd = finite_diff_grad(f, group.tensors[ti]);
      slot = group.tensors[ti];
      const Tensor& an = grads[offset + ti];
      analytic.insert(analytic.end(), an.data().begin(), an.data().end());
      numeric.insert(numeric.end(), fd.data().begin(), fd.data().end());
    }
    offset += group.tensors.size();
    const std::size_t n = analytic.size();
    out.push_back({"total_loss[" + form + "]/" + group.name,
                   relative_error(Tensor(Shape{n}, std::move(analytic)), Tensor(Shape{n}, std::move(numeric)))});
  }
}

}  // namespace

std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradcheckCase> out;
  Rng rng(seed);
  primitive_cases(out, rng);
  using F = LayerForm;
  end_to_end_case(out, tiny_arch(F::kConv1d, F::kLinear, F::kLinear), seed, rng);
  end_to_end_case(out, tiny_arch(F::kLinear, F::kConv1d, F::kConv1d), seed, rng);
  end_to_end_case(out, tiny_arch(F::kConv2d, F::kConv2d, F::kConv2d), seed, rng);
  return out;
}

}  // namespace semivl
