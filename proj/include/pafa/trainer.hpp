#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pafa/eval.hpp"
#include "pafa/feature_store.hpp"
#include "pafa/losses.hpp"
#include "pafa/manifest.hpp"
#include "pafa/model.hpp"

namespace pafa {

enum class Variant : int { Full = 0, CeOnly = 1, NoPcsl = 2, NoGpal = 3 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

// Ablation gate: ce_only zeroes both patient-loss weights, no_pcsl and
// no_gpal zero one each. Training code is otherwise identical across
// variants, so a full run with both lambdas set to zero is bitwise equal
// to a ce_only run.
LossWeights effective_weights(Variant variant, const LossWeights& base);

struct SamplerConfig {
  enum class Kind { Pk, Shuffle };
  Kind kind = Kind::Pk;
  int patients = 8;  // P
  int samples = 4;   // K
};

struct TrainConfig {
  Variant variant = Variant::Full;
  double lr = 5e-5;
  double weight_decay = 1e-6;
  int epochs = 100;
  int batch_size = 32;
  LossWeights weights;
  std::uint64_t seed = 1;
  SamplerConfig sampler;
  ModelConfig model;
};

// Defaults sized for the synthetic benchmark: shorter schedule, smaller
// embedding, and a learning rate suited to a randomly initialized encoder
// instead of fine-tuning.
TrainConfig desk_scale_config();

struct TrainBatch {
  std::vector<std::size_t> rows;  // indices into the train row vector
  PatientGroups groups;
};

// pk mode draws P distinct patients with K samples each per batch
// (sampling within a patient with replacement only when it has fewer than
// K samples); shuffle mode is a uniform permutation cut into fixed-size
// chunks. Deterministic per (seed, epoch).
std::vector<TrainBatch> make_batches(const std::vector<SampleMeta>& train_rows,
                                     const SamplerConfig& sampler, int batch_size,
                                     std::uint64_t seed, int epoch);

template <typename Scalar>
struct AdamState {
  std::vector<MatrixX<Scalar>> m, v;
  long t = 0;
};

template <typename Scalar>
AdamState<Scalar> make_adam_state(const ModelParams<Scalar>& params) {
  AdamState<Scalar> s;
  params.for_each_tensor([&](const std::string&, const MatrixX<Scalar>& t, int) {
    s.m.push_back(MatrixX<Scalar>::Zero(t.rows(), t.cols()));
    s.v.push_back(MatrixX<Scalar>::Zero(t.rows(), t.cols()));
  });
  return s;
}

// Adam with bias correction and decoupled weight decay, applied as
// p <- p - lr*wd*p before the moment update.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads,
               AdamState<Scalar>& state, double lr, double weight_decay, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

  std::vector<MatrixX<Scalar>*> p_tensors, g_tensors;
  params.for_each_tensor(
      [&](const std::string&, MatrixX<Scalar>& t, int) { p_tensors.push_back(&t); });
  const_cast<ModelParams<Scalar>&>(grads).for_each_tensor(
      [&](const std::string&, MatrixX<Scalar>& t, int) { g_tensors.push_back(&t); });
  if (p_tensors.size() != g_tensors.size() || p_tensors.size() != state.m.size())
    throw DataError("adam_step: tensor layout mismatch");

  const Scalar b1 = static_cast<Scalar>(beta1), b2 = static_cast<Scalar>(beta2);
  const Scalar lr_s = static_cast<Scalar>(lr), wd_s = static_cast<Scalar>(weight_decay);
  const Scalar eps_s = static_cast<Scalar>(eps);
  const Scalar inv_bc1 = static_cast<Scalar>(1.0 / bc1), inv_bc2 = static_cast<Scalar>(1.0 / bc2);

  for (std::size_t i = 0; i < p_tensors.size(); ++i) {
    MatrixX<Scalar>& p = *p_tensors[i];
    const MatrixX<Scalar>& g = *g_tensors[i];
    MatrixX<Scalar>& m = state.m[i];
    MatrixX<Scalar>& v = state.v[i];
    p.array() -= lr_s * wd_s * p.array();
    m.array() = b1 * m.array() + (Scalar(1) - b1) * g.array();
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    p.array() -=
        lr_s * (m.array() * inv_bc1) / ((v.array() * inv_bc2).sqrt() + eps_s);
  }
}

struct EpochStats {
  double ce = 0, pcsl = 0, gpal = 0, total = 0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochStats> epochs;
  bool has_metrics = false;
  MetricTriple metrics4, metrics2;
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint_path;
  double wall_seconds = 0;
};

// End-to-end training. Writes config.txt, epochs.csv, checkpoint.pafc,
// metrics.json-lines and predictions.csv into run_dir. A non-finite loss
// aborts with the epoch/batch location.
RunRecord train(const TrainConfig& cfg, const Manifest& manifest, const FeatureStore& features,
                const std::filesystem::path& run_dir);

struct AblationRow {
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  MetricTriple metrics;
};

// variants x seeds grid; writes ablation.csv plus an aggregated
// ablation_summary.csv under out_dir, one run directory per cell.
std::vector<AblationRow> run_ablation(const Manifest& manifest, const FeatureStore& features,
                                      const TrainConfig& base,
                                      std::span<const std::uint64_t> seeds,
                                      std::span<const Variant> variants,
                                      const std::filesystem::path& out_dir);

void save_train_config(const std::filesystem::path& path, const TrainConfig& cfg);
TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace pafa
