#include "semivl/loss.hpp"

#include <stdexcept>

#include "semivl/ops.hpp"

namespace semivl {

void LossConfig::validate() const {
  if (!(lambda_unsup >= 0.0) || !(lambda_sup >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  if (mc_samples < 1) throw std::invalid_argument("Monte-Carlo draw count must be >= 1");
  if (!(obs_var > 0.0)) throw std::invalid_argument("observation variance must be positive");
  prior.validate();
}

std::vector<NoisePair> draw_noise(Rng& rng, std::size_t batch, std::size_t latent_y, std::size_t latent_z,
                                  int count) {
  std::vector<NoisePair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int l = 0; l < count; ++l) {
    NoisePair p{Tensor(Shape{batch, latent_y}), Tensor(Shape{batch, latent_z})};
    for (double& v : p.y.storage()) v = rng.normal();
    for (double& v : p.z.storage()) v = rng.normal();
    out.push_back(std::move(p));
  }
  return out;
}

ElboTerms elbo_terms(Var x, const GaussianCodeVar& qy, const GaussianCodeVar& qz, const DecoderFn& decoder,
                     std::span<const NoisePair> noise, const LossConfig& config) {
  config.validate();
  if (noise.empty()) throw std::invalid_argument("elbo: need at least one noise draw");
  Graph& g = *x.graph;
  Var recon{};
  for (std::size_t l = 0; l < noise.size(); ++l) {
    Var y = reparameterize(qy, g.constant(noise[l].y));
    Var z = reparameterize(qz, g.constant(noise[l].z));
    Var ll = gaussian_log_likelihood(x, decoder(y, z), config.obs_var);
    recon = l == 0 ? ll : add(recon, ll);
  }
  if (noise.size() > 1) recon = scale(recon, 1.0 / static_cast<double>(noise.size()));
  Var kl_y = kl_gaussian_diag(qy, config.prior.var_y);
  Var kl_z = kl_gaussian_diag(qz, config.prior.var_z);
  return ElboTerms{sub(sub(recon, kl_y), kl_z), recon, kl_y, kl_z};
}

ElboTerms elbo(const BoundModel& model, Var x, std::span<const NoisePair> noise, const LossConfig& config) {
  const GaussianCodeVar qy = encode_y(model, x);
  const GaussianCodeVar qz = encode_z(model, x);
  return elbo_terms(
      x, qy, qz, [&model](Var y, Var z) { return decode(model, y, z); }, noise, config);
}

namespace {

Tensor stack_rows(const Tensor* a, const Tensor* b) {
  const Tensor* only = a == nullptr ? b : (b == nullptr ? a : nullptr);
  if (only != nullptr) return *only;
  if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(1)) {
    throw std::invalid_argument("unsupervised_loss: waveform batches " + shape_str(a->shape()) + " and " +
                                shape_str(b->shape()) + " cannot be stacked");
  }
  std::vector<double> data(a->storage());
  data.insert(data.end(), b->storage().begin(), b->storage().end());
  return Tensor(Shape{a->dim(0) + b->dim(0), a->dim(1)}, std::move(data));
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor t(Shape{labels.size(), classes}, 0.0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= classes) {
      throw std::invalid_argument("environment label " + std::to_string(labels[j]) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
    t[j * classes + labels[j]] = 1.0;
  }
  return t;
}

// Supervised term from already-encoded latents of the labeled rows.
Var supervised_from_latents(const BoundModel& model, Var y, Var z, std::span<const double> range_error,
                            std::span<const std::size_t> env_label) {
  Graph& g = *y.graph;
  const std::size_t n = y.shape()[0];
  if (range_error.size() != n || env_label.size() != n) {
    throw std::invalid_argument("supervised_loss: every labeled waveform needs a ranging error and an environment label");
  }
  Var target_dd = g.constant(Tensor(Shape{n}, std::vector<double>(range_error.begin(), range_error.end())));
  Var target_k = g.constant(one_hot(env_label, model.arch->env_classes));
  Var est = sum(square(sub(estimate_error(model, y), target_dd)));
  Var cls = sum(square(sub(classify_env(model, z), target_k)));
  return add(est, cls);
}

}  // namespace

Var unsupervised_loss(const BoundModel& model, const Tensor* unlabeled, const Tensor* labeled,
                      std::span<const NoisePair> noise, const LossConfig& config) {
  if (unlabeled == nullptr && labeled == nullptr) {
    throw std::invalid_argument("unsupervised_loss: both unlabeled and labeled batches are empty");
  }
  Graph& g = *model.enc_y.vars().front().graph;
  Var x = g.constant(stack_rows(unlabeled, labeled));
  return scale(elbo(model, x, noise, config).elbo, -1.0);
}

Var supervised_loss(const BoundModel& model, Var labeled_waveforms, std::span<const double> range_error,
                    std::span<const std::size_t> env_label, const LossConfig& config,
                    std::span<const NoisePair> noise) {
  const GaussianCodeVar qy = encode_y(model, labeled_waveforms);
  const GaussianCodeVar qz = encode_z(model, labeled_waveforms);
  Var y = qy.mean;
  Var z = qz.mean;
  if (config.heads_use_samples) {
    if (noise.empty()) throw std::invalid_argument("supervised_loss: sampled heads need a noise draw");
    Graph& g = *labeled_waveforms.graph;
    y = reparameterize(qy, g.constant(noise[0].y));
    z = reparameterize(qz, g.constant(noise[0].z));
  }
  return supervised_from_latents(model, y, z, range_error, env_label);
}

TotalLoss total_loss(const BoundModel& model, const LossBatch& batch, std::span<const NoisePair> noise,
                     const LossConfig& config) {
  config.validate();
  if (batch.waveforms.rank() != 2 || batch.waveforms.dim(0) == 0) {
    throw std::invalid_argument("total_loss: empty waveform batch");
  }
  Graph& g = *model.enc_y.vars().front().graph;
  Var x = g.constant(batch.waveforms);
  const GaussianCodeVar qy = encode_y(model, x);
  const GaussianCodeVar qz = encode_z(model, x);
  const ElboTerms terms = elbo_terms(
      x, qy, qz, [&model](Var y, Var z) { return decode(model, y, z); }, noise, config);
  Var unsup = scale(terms.elbo, -1.0);

  Var sup{};
  bool has_sup = !batch.labels.empty();
  if (has_sup) {
    Var y = qy.mean;
    Var z = qz.mean;
    if (config.heads_use_samples) {
      y = reparameterize(qy, g.constant(noise[0].y));
      z = reparameterize(qz, g.constant(noise[0].z));
    }
    sup = supervised_from_latents(model, select_rows(y, batch.labels.rows), select_rows(z, batch.labels.rows),
                                  batch.labels.range_error, batch.labels.env_label);
  } else {
    sup = g.constant(Tensor::scalar(0.0));
  }
  Var total = add(scale(unsup, config.lambda_unsup), scale(sup, config.lambda_sup));

  LossBreakdown b;
  b.total = total.value().item();
  b.unsup = unsup.value().item();
  b.sup = sup.value().item();
  b.recon = terms.recon.value().item();
  b.kl_y = terms.kl_y.value().item();
  b.kl_z = terms.kl_z.value().item();
  return TotalLoss{total, b};
}

double elbo(const ModelParams& params, const Tensor& waveform, std::span<const NoisePair> noise,
            const LossConfig& config) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  const Tensor x = waveform.rank() == 1 ? waveform.reshaped(Shape{1, waveform.size()}) : waveform;
  return elbo(m, g.constant(x), noise, config).elbo.value().item();
}

double supervised_loss(const ModelParams& params, const Tensor& waveforms, std::span<const double> range_error,
                       std::span<const std::size_t> env_label, const LossConfig& config) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  return supervised_loss(m, g.constant(waveforms), range_error, env_label, config).value().item();
}

LossBreakdown total_loss(const ModelParams& params, const LossBatch& batch, std::span<const NoisePair> noise,
                         const LossConfig& config) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  return total_loss(m, batch, noise, config).breakdown;
}

}  // namespace semivl
