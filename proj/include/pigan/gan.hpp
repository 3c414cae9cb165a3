#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pigan/autodiff.hpp"
#include "pigan/families.hpp"
#include "pigan/qstate.hpp"
#include "pigan/state_nodes.hpp"

namespace pigan::gan {

using families::Family;
using families::Task;
using qstate::DensityCandidate;

enum class GeneratorKind { Cholesky, LDL, Direct };

std::string to_string(GeneratorKind k);
GeneratorKind generator_kind_from_string(const std::string& s);
std::size_t head_width(GeneratorKind k);

struct LossWeights {
  double lambda_psd = 10.0;
  double lambda_trace = 10.0;
  double lambda_herm = 5.0;       // Direct only
  double lambda_task_base = 5.0;
  double lambda_div = 0.5;
  double m_task = 1.0;
  double effective_task_weight() const { return lambda_task_base * m_task; }
};

LossWeights resolve_weights(LossWeights base, Task task);

struct TrainConfig {
  GeneratorKind kind = GeneratorKind::Cholesky;
  Family family = Family::BellDiagonal;
  Task task = Task::Teleportation;
  std::size_t train_size = 2000;
  std::size_t batch = 512;
  std::size_t steps = 10000;
  double lr = 1e-5;
  std::uint64_t seed = 1;
  std::size_t eval_every = 1000;
  std::size_t eval_samples = 1000;
  double leaky_slope = 0.2;
  double dropout = 0.3;
  bool residual_skip = true;
  double rms_decay = 0.99;
  double rms_eps = 1e-8;
  double diversity_margin = 0.1;
  std::size_t latent_dim = 100;
  qstate::FidelityConvention fidelity_convention = qstate::FidelityConvention::Squared;
  int eval_threads = 1;
};

struct LossParts {
  double d_loss = 0, g_loss = 0;
  double adv = 0, trace = 0, psd = 0, herm = 0, task = 0, div = 0;
};

struct Metrics {
  double accuracy = 0;
  double cross_fidelity = 0;
  double fid = 0;
  double offfamily_residual = 0;
};

struct EvalRecord {
  std::size_t step = 0;
  LossParts losses;
  Metrics metrics;
};

// NaN encountered in a loss; carries a diagnostic snapshot.
class TrainAbort : public NumericError {
public:
  TrainAbort(std::size_t step, const LossParts& parts, double gen_norm,
             double disc_norm);
  std::size_t step;
  LossParts parts;
  double gen_norm;
  double disc_norm;
};

// Architecture wiring. The generator trunk is latent -> 256 -> 256 -> head
// with LayerNorm + LeakyReLU after each hidden affine and an optional
// residual skip across the two 256-wide layers; the head width depends on
// the generator kind (16/16/32). RNG order during init: generator blocks in
// order, then the discriminator stack.
void init_generator_params(ad::ParamStore& store, const TrainConfig& cfg, Rng& rng);
void init_discriminator_params(ad::ParamStore& store, const TrainConfig& cfg, Rng& rng);

struct GenerateResult {
  ad::Tape::Id candidates;  // (B,32) density-matrix channels
  ad::Tape::Id raw_head;    // pre-symmetrization head, Direct only (-1 otherwise)
};

GenerateResult generate(ad::Tape& tape, ad::ParamStore& store, ad::Tape::Id z,
                        const TrainConfig& cfg);
ad::Tape::Id discriminate(ad::Tape& tape, ad::ParamStore& store, ad::Tape::Id rho,
                          bool train_mode, Rng& rng, const TrainConfig& cfg,
                          bool trainable);

// Tape-free eval-mode sampling; returns (batch x 32) candidate channels.
std::vector<double> generate_infer(const ad::ParamStore& store,
                                   const std::vector<double>& z, std::size_t batch,
                                   const TrainConfig& cfg);

struct GeneratorLoss {
  ad::Tape::Id total;
  LossParts parts;  // d_loss left at zero
};

GeneratorLoss generator_loss(ad::Tape& tape, const GenerateResult& gen,
                             ad::Tape::Id d_scores, const LossWeights& weights,
                             const TrainConfig& cfg);
ad::Tape::Id discriminator_loss(ad::Tape& tape, ad::Tape::Id real_scores,
                                ad::Tape::Id fake_scores);

struct TrainCallbacks {
  std::function<void(const EvalRecord&)> on_eval;
  std::function<void(std::size_t step, const ad::ParamStore& gen,
                     const ad::ParamStore& disc, const Rng& rng)>
      on_checkpoint;
};

struct TrainResult {
  ad::ParamStore gen;
  ad::ParamStore disc;
  std::vector<EvalRecord> log;
};

// Alternating single-step updates, one RNG stream consumed in a fixed order
// per step (batch indices, latent batch, dropout masks). Deterministic for a
// fixed seed. Evaluation batches draw from a stream derived from (seed, step)
// so the cadence does not disturb training.
TrainResult train(const TrainConfig& cfg, const LossWeights& weights,
                  const std::vector<families::Sample>& dataset,
                  const TrainCallbacks& callbacks = {});

std::vector<DensityCandidate> candidates_from_channels(const std::vector<double>& flat,
                                                       std::size_t batch);
std::vector<double> channels_from_state(const DensityCandidate& rho);

// accuracy / FID on the raw candidates; cross-set fidelity on candidates
// projected to the nearest valid state.
Metrics evaluate(const std::vector<DensityCandidate>& generated,
                 const std::vector<DensityCandidate>& train_set, Family family,
                 Task task,
                 qstate::FidelityConvention convention =
                     qstate::FidelityConvention::Squared,
                 int threads = 1);

// Mean pairwise Uhlmann fidelity over distinct ordered pairs.
double self_fidelity_baseline(const std::vector<DensityCandidate>& set,
                              qstate::FidelityConvention convention =
                                  qstate::FidelityConvention::Squared,
                              int threads = 1);

// Gaussian-moment distance between two embedded samples: covariances use
// 1/(n-1) normalization plus a 1e-10 ridge.
double fid_score(const std::vector<std::array<double, 16>>& a,
                 const std::vector<std::array<double, 16>>& b);

}  // namespace pigan::gan
