#include "pigan/gan.hpp"

#include <cmath>
#include <thread>

#include "pigan/common.hpp"

namespace pigan::gan {

using ad::ParamStore;
using ad::Tape;
using ad::Tensor;
using linalg::ComplexMatrix;
using linalg::cplx;

std::string to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::Cholesky: return "cholesky";
    case GeneratorKind::LDL: return "ldl";
    case GeneratorKind::Direct: return "direct";
  }
  return "";
}

GeneratorKind generator_kind_from_string(const std::string& s) {
  if (s == "cholesky") return GeneratorKind::Cholesky;
  if (s == "ldl") return GeneratorKind::LDL;
  if (s == "direct") return GeneratorKind::Direct;
  throw ConfigError("unknown generator kind: " + s);
}

std::size_t head_width(GeneratorKind k) {
  return k == GeneratorKind::Direct ? 32 : 16;
}

LossWeights resolve_weights(LossWeights base, Task task) {
  base.m_task = families::task_multiplier(task);
  return base;
}

TrainAbort::TrainAbort(std::size_t step_, const LossParts& parts_, double gen_norm_,
                       double disc_norm_)
    : NumericError("training aborted: non-finite loss at step " +
                   std::to_string(step_)),
      step(step_),
      parts(parts_),
      gen_norm(gen_norm_),
      disc_norm(disc_norm_) {}

namespace {

constexpr double kLdlEps = 1e-6;
constexpr double kLogFloor = 1e-12;
constexpr double kWernerHingeThreshold = 1e-3;

std::vector<ad::LayerSpec> trunk_block(std::size_t in, std::size_t out, double slope) {
  return {ad::affine_layer(in, out), ad::layer_norm_layer(out),
          ad::leaky_relu_layer(slope)};
}

std::vector<ad::LayerSpec> head_block(GeneratorKind kind) {
  return {ad::affine_layer(256, head_width(kind))};
}

std::vector<ad::LayerSpec> discriminator_spec(const TrainConfig& cfg) {
  std::vector<ad::LayerSpec> net;
  const std::size_t widths[5] = {32, 256, 512, 256, 128};
  for (int l = 0; l < 4; ++l) {
    net.push_back(ad::affine_layer(widths[l], widths[l + 1]));
    net.push_back(ad::leaky_relu_layer(cfg.leaky_slope));
    net.push_back(ad::layer_norm_layer(widths[l + 1]));
    net.push_back(ad::dropout_layer(cfg.dropout));
  }
  net.push_back(ad::affine_layer(128, 1));
  net.push_back(ad::sigmoid_layer());
  return net;
}

}  // namespace

void init_generator_params(ad::ParamStore& store, const TrainConfig& cfg, Rng& rng) {
  ad::init_mlp(store, "gen.b1", trunk_block(cfg.latent_dim, 256, cfg.leaky_slope), rng);
  ad::init_mlp(store, "gen.b2", trunk_block(256, 256, cfg.leaky_slope), rng);
  ad::init_mlp(store, "gen.head", head_block(head_width(cfg.kind), cfg.kind), rng);
}

void init_discriminator_params(ad::ParamStore& store, const TrainConfig& cfg, Rng& rng) {
  ad::init_mlp(store, "disc", discriminator_spec(cfg), rng);
}

GenerateResult generate(ad::Tape& tape, ad::ParamStore& store, ad::Tape::Id z,
                        const TrainConfig& cfg) {
  Rng unused(0);  // generator has no dropout layers
  const Tape::Id h1 = ad::mlp_forward(tape, trunk_block(cfg.latent_dim, 256, cfg.leaky_slope),
                                      store, "gen.b1", z, false, unused);
  Tape::Id h2 = ad::mlp_forward(tape, trunk_block(256, 256, cfg.leaky_slope), store,
                                "gen.b2", h1, false, unused);
  if (cfg.residual_skip) h2 = tape.add(h2, h1);
  const Tape::Id head = ad::mlp_forward(tape, head_block(head_width(cfg.kind), cfg.kind),
                                        store, "gen.head", h2, false, unused);
  GenerateResult out{-1, -1};
  switch (cfg.kind) {
    case GeneratorKind::Cholesky:
      out.candidates = ad::trace_normalize(tape, ad::cholesky_assemble(tape, head));
      break;
    case GeneratorKind::LDL:
      out.candidates = ad::trace_normalize(tape, ad::ldl_assemble(tape, head, kLdlEps));
      break;
    case GeneratorKind::Direct:
      out.raw_head = head;
      out.candidates = ad::direct_hermitize(tape, head);
      break;
  }
  return out;
}

ad::Tape::Id discriminate(ad::Tape& tape, ad::ParamStore& store, ad::Tape::Id rho,
                          bool train_mode, Rng& rng, const TrainConfig& cfg,
                          bool trainable) {
  return ad::mlp_forward(tape, discriminator_spec(cfg), store, "disc", rho,
                         train_mode, rng, trainable);
}

std::vector<double> generate_infer(const ad::ParamStore& store,
                                   const std::vector<double>& z, std::size_t batch,
                                   const TrainConfig& cfg) {
  const auto h1 = ad::mlp_infer(trunk_block(cfg.latent_dim, 256, cfg.leaky_slope),
                                store, "gen.b1", z, batch);
  auto h2 = ad::mlp_infer(trunk_block(256, 256, cfg.leaky_slope), store, "gen.b2",
                          h1, batch);
  if (cfg.residual_skip)
    for (std::size_t i = 0; i < h2.size(); ++i) h2[i] += h1[i];
  const auto head = ad::mlp_infer(head_block(head_width(cfg.kind), cfg.kind), store,
                                  "gen.head", h2, batch);
  // reuse the tape nodes for the constructive maps; gradients are not tracked
  // because the head enters as a plain input
  ad::Tape tape;
  Tensor ht = Tensor::zeros({batch, head_width(cfg.kind)});
  ht.values = head;
  const Tape::Id hid = tape.input(std::move(ht));
  Tape::Id out = -1;
  switch (cfg.kind) {
    case GeneratorKind::Cholesky:
      out = ad::trace_normalize(tape, ad::cholesky_assemble(tape, hid));
      break;
    case GeneratorKind::LDL:
      out = ad::trace_normalize(tape, ad::ldl_assemble(tape, hid, kLdlEps));
      break;
    case GeneratorKind::Direct:
      out = ad::direct_hermitize(tape, hid);
      break;
  }
  return tape.val(out).values;
}

GeneratorLoss generator_loss(ad::Tape& tape, const GenerateResult& gen,
                             ad::Tape::Id d_scores, const LossWeights& weights,
                             const TrainConfig& cfg) {
  const Tape::Id adv =
      tape.affine_scalar(tape.mean_all(tape.log_floor(d_scores, kLogFloor)), -1.0, 0.0);
  const Tape::Id trace_term = tape.mean_all(ad::trace_penalty(tape, gen.candidates));
  const Tape::Id psd_term = tape.mean_all(ad::psd_penalty(tape, gen.candidates));

  Tape::Id task_term;
  if (cfg.task == Task::Teleportation) {
    task_term = tape.mean_all(ad::teleport_hinge(tape, gen.candidates));
  } else if (cfg.family == Family::BellDiagonal) {
    const double threshold = cfg.task == Task::LocalBroadcast ? 9.0 / 4.0 : 5.0 / 3.0;
    task_term = tape.mean_all(ad::bell_broadcast_hinge(tape, gen.candidates, threshold));
  } else {
    task_term = tape.mean_all(
        ad::werner_broadcast_hinge(tape, gen.candidates, kWernerHingeThreshold));
  }

  const Tape::Id div_term = ad::diversity_loss(
      tape, ad::pauli_embed(tape, gen.candidates), cfg.diversity_margin);

  Tape::Id total = tape.add(adv, tape.affine_scalar(trace_term, weights.lambda_trace, 0.0));
  total = tape.add(total, tape.affine_scalar(psd_term, weights.lambda_psd, 0.0));
  total = tape.add(total,
                   tape.affine_scalar(task_term, weights.effective_task_weight(), 0.0));
  total = tape.add(total, tape.affine_scalar(div_term, weights.lambda_div, 0.0));

  GeneratorLoss out;
  out.parts.adv = tape.val(adv).values[0];
  out.parts.trace = tape.val(trace_term).values[0];
  out.parts.psd = tape.val(psd_term).values[0];
  out.parts.task = tape.val(task_term).values[0];
  out.parts.div = tape.val(div_term).values[0];
  if (gen.raw_head >= 0) {
    const Tape::Id herm_term = tape.mean_all(ad::herm_penalty(tape, gen.raw_head));
    total = tape.add(total, tape.affine_scalar(herm_term, weights.lambda_herm, 0.0));
    out.parts.herm = tape.val(herm_term).values[0];
  }
  out.total = total;
  out.parts.g_loss = tape.val(total).values[0];
  return out;
}

ad::Tape::Id discriminator_loss(ad::Tape& tape, ad::Tape::Id real_scores,
                                ad::Tape::Id fake_scores) {
  const Tape::Id real_term =
      tape.mean_all(tape.log_floor(real_scores, kLogFloor));
  const Tape::Id fake_term = tape.mean_all(
      tape.log_floor(tape.affine_scalar(fake_scores, -1.0, 1.0), kLogFloor));
  return tape.affine_scalar(tape.add(real_term, fake_term), -1.0, 0.0);
}

std::vector<DensityCandidate> candidates_from_channels(const std::vector<double>& flat,
                                                       std::size_t batch) {
  std::vector<DensityCandidate> out;
  out.reserve(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    const double* x = flat.data() + s * 32;
    ComplexMatrix m(4, 4);
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b)
        m(a, b) = cplx(x[ad::re_ch(a, b)], x[ad::im_ch(a, b)]);
    out.emplace_back(m);
  }
  return out;
}

std::vector<double> channels_from_state(const DensityCandidate& rho) {
  std::vector<double> x(32);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      x[ad::re_ch(a, b)] = rho.mat()(a, b).real();
      x[ad::im_ch(a, b)] = rho.mat()(a, b).imag();
    }
  return x;
}

namespace {

bool finite(const LossParts& p) {
  for (double v : {p.d_loss, p.g_loss, p.adv, p.trace, p.psd, p.herm, p.task, p.div})
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<DensityCandidate> sample_candidates(const ad::ParamStore& gen,
                                                const TrainConfig& cfg,
                                                std::size_t count, Rng& rng) {
  std::vector<double> z(count * cfg.latent_dim);
  for (double& v : z) v = rng.gaussian();
  return candidates_from_channels(generate_infer(gen, z, count, cfg), count);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const LossWeights& weights,
                  const std::vector<families::Sample>& dataset,
                  const TrainCallbacks& callbacks) {
  if (dataset.empty()) throw DataError("train: empty dataset");
  if (cfg.batch < 1) throw ConfigError("train: batch >= 1 required");

  Rng rng(cfg.seed);
  TrainResult result;
  init_generator_params(result.gen, cfg, rng);
  init_discriminator_params(result.disc, cfg, rng);

  std::vector<DensityCandidate> train_states;
  train_states.reserve(dataset.size());
  std::vector<std::vector<double>> train_channels;
  train_channels.reserve(dataset.size());
  for (const auto& sample : dataset) {
    train_states.push_back(sample.rho);
    train_channels.push_back(channels_from_state(sample.rho));
  }

  const std::size_t b = cfg.batch;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    // fixed consumption order: batch indices, latents, dropout masks
    Tensor real = Tensor::zeros({b, 32});
    for (std::size_t i = 0; i < b; ++i) {
      const auto& ch = train_channels[rng.below(dataset.size())];
      std::copy(ch.begin(), ch.end(), real.values.begin() + i * 32);
    }
    std::vector<double> z(b * cfg.latent_dim);
    for (double& v : z) v = rng.gaussian();

    LossParts parts;

    // discriminator update on a detached fake batch
    {
      ad::Tape tape;
      Tensor fake = Tensor::zeros({b, 32});
      fake.values = generate_infer(result.gen, z, b, cfg);
      const Tape::Id sr = discriminate(tape, result.disc, tape.input(std::move(real)),
                                       true, rng, cfg, true);
      const Tape::Id sf = discriminate(tape, result.disc, tape.input(std::move(fake)),
                                       true, rng, cfg, true);
      const Tape::Id loss = discriminator_loss(tape, sr, sf);
      parts.d_loss = tape.val(loss).values[0];
      tape.backward(loss);
      ad::rmsprop_step(result.disc, cfg.lr, cfg.rms_decay, cfg.rms_eps);
    }

    // generator update through a dropout-free discriminator
    {
      ad::Tape tape;
      Tensor zt = Tensor::zeros({b, cfg.latent_dim});
      zt.values = z;
      const GenerateResult gen = generate(tape, result.gen, tape.input(std::move(zt)), cfg);
      const Tape::Id scores =
          discriminate(tape, result.disc, gen.candidates, false, rng, cfg, false);
      GeneratorLoss loss = generator_loss(tape, gen, scores, weights, cfg);
      loss.parts.d_loss = parts.d_loss;
      parts = loss.parts;
      tape.backward(loss.total);
      ad::rmsprop_step(result.gen, cfg.lr, cfg.rms_decay, cfg.rms_eps);
    }

    if (!finite(parts))
      throw TrainAbort(step, parts, result.gen.value_norm(), result.disc.value_norm());

    const bool eval_point =
        (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps;
    if (eval_point) {
      Rng eval_rng(derive_seed(cfg.seed, step));
      const auto generated =
          sample_candidates(result.gen, cfg, cfg.eval_samples, eval_rng);
      EvalRecord record;
      record.step = step;
      record.losses = parts;
      record.metrics = evaluate(generated, train_states, cfg.family, cfg.task,
                                cfg.fidelity_convention, cfg.eval_threads);
      result.log.push_back(record);
      if (callbacks.on_eval) callbacks.on_eval(record);
      if (callbacks.on_checkpoint)
        callbacks.on_checkpoint(step, result.gen, result.disc, rng);
    }
  }
  return result;
}

namespace {

// deterministic fan-out: fixed 256-wide blocks summed in block order, so the
// result does not depend on the number of worker threads
double pairwise_fidelity_sum(const std::vector<ComplexMatrix>& sqrt_left,
                             const std::vector<DensityCandidate>& right,
                             qstate::FidelityConvention convention, int threads,
                             bool skip_diagonal, std::size_t* pair_count) {
  const std::size_t n_left = sqrt_left.size();
  const std::size_t block = 256;
  const std::size_t n_blocks = (n_left + block - 1) / block;
  std::vector<double> block_sums(n_blocks, 0.0);
  std::vector<std::size_t> block_counts(n_blocks, 0);

  auto run_block = [&](std::size_t bi) {
    const std::size_t lo = bi * block;
    const std::size_t hi = std::min(lo + block, n_left);
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < right.size(); ++j) {
        if (skip_diagonal && i == j) continue;
        s += qstate::uhlmann_fidelity_with_sqrt(sqrt_left[i], right[j], convention);
        ++count;
      }
    block_sums[bi] = s;
    block_counts[bi] = count;
  };

  if (threads <= 1 || n_blocks <= 1) {
    for (std::size_t bi = 0; bi < n_blocks; ++bi) run_block(bi);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    const int workers = std::min<std::size_t>(threads, n_blocks);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t bi = next.fetch_add(1); bi < n_blocks; bi = next.fetch_add(1))
          run_block(bi);
      });
    for (auto& t : pool) t.join();
  }

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t bi = 0; bi < n_blocks; ++bi) {
    total += block_sums[bi];
    count += block_counts[bi];
  }
  if (pair_count) *pair_count = count;
  return total;
}

std::array<double, 16> embedding_of(const DensityCandidate& rho) {
  return qstate::pauli_embedding(rho).phi;
}

}  // namespace

Metrics evaluate(const std::vector<DensityCandidate>& generated,
                 const std::vector<DensityCandidate>& train_set, Family family,
                 Task task, qstate::FidelityConvention convention, int threads) {
  if (generated.empty() || train_set.empty())
    throw std::invalid_argument("evaluate: empty state list");

  Metrics m;
  std::size_t useful = 0;
  double residual = 0.0;
  std::vector<std::array<double, 16>> emb_gen;
  emb_gen.reserve(generated.size());
  for (const auto& rho : generated) {
    if (families::criterion(family, task, rho)) ++useful;
    residual += families::offfamily_residual(family, rho);
    emb_gen.push_back(embedding_of(rho));
  }
  m.accuracy = static_cast<double>(useful) / static_cast<double>(generated.size());
  m.offfamily_residual = residual / static_cast<double>(generated.size());

  std::vector<std::array<double, 16>> emb_train;
  emb_train.reserve(train_set.size());
  for (const auto& rho : train_set) emb_train.push_back(embedding_of(rho));
  m.fid = fid_score(emb_gen, emb_train);

  std::vector<ComplexMatrix> sqrt_gen;
  sqrt_gen.reserve(generated.size());
  for (const auto& rho : generated)
    sqrt_gen.push_back(linalg::psd_sqrt(qstate::project_to_physical(rho).mat()));
  const double sum =
      pairwise_fidelity_sum(sqrt_gen, train_set, convention, threads, false, nullptr);
  m.cross_fidelity =
      sum / (static_cast<double>(generated.size()) * static_cast<double>(train_set.size()));
  return m;
}

double self_fidelity_baseline(const std::vector<DensityCandidate>& set,
                              qstate::FidelityConvention convention, int threads) {
  if (set.size() < 2)
    throw std::invalid_argument("self_fidelity_baseline: need at least two states");
  std::vector<ComplexMatrix> sqrts;
  sqrts.reserve(set.size());
  for (const auto& rho : set) sqrts.push_back(linalg::psd_sqrt(rho.mat()));
  std::size_t pairs = 0;
  const double sum = pairwise_fidelity_sum(sqrts, set, convention, threads, true, &pairs);
  return sum / static_cast<double>(pairs);
}

double fid_score(const std::vector<std::array<double, 16>>& a,
                 const std::vector<std::array<double, 16>>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("fid_score: need at least two samples per side");

  auto moments = [](const std::vector<std::array<double, 16>>& x,
                    std::array<double, 16>& mu, ComplexMatrix& cov) {
    const double n = static_cast<double>(x.size());
    mu.fill(0.0);
    for (const auto& row : x)
      for (int k = 0; k < 16; ++k) mu[k] += row[k];
    for (int k = 0; k < 16; ++k) mu[k] /= n;
    cov = ComplexMatrix(16, 16);
    for (const auto& row : x)
      for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
          cov(i, j) += (row[i] - mu[i]) * (row[j] - mu[j]);
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) cov(i, j) /= (n - 1.0);
      cov(i, i) += 1e-10;
    }
  };

  std::array<double, 16> mu_a, mu_b;
  ComplexMatrix cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);

  double dist = 0.0;
  for (int k = 0; k < 16; ++k) dist += (mu_a[k] - mu_b[k]) * (mu_a[k] - mu_b[k]);

  const ComplexMatrix root_a = linalg::psd_sqrt(cov_a);
  const ComplexMatrix inner = root_a * cov_b * root_a;
  double cross = 0.0;
  for (double lam : linalg::hermitian_eigenvalues(inner))
    cross += std::sqrt(std::max(0.0, lam));

  double tr = 0.0;
  for (int k = 0; k < 16; ++k) tr += cov_a(k, k).real() + cov_b(k, k).real();
  return dist + tr - 2.0 * cross;
}

}  // namespace pigan::gan
