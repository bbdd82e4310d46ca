#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "divnorm/diverse_norm.hpp"
#include "divnorm/synth.hpp"

namespace divnorm {

struct TrainConfig {
  int identities_per_batch = 8;  // P
  int samples_per_identity = 8;  // K
  int epochs = 30;
  double lr0 = 3.5e-4;
  int lr_decay_every = 20;
  double lr_decay_factor = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
};

// lr0 * factor^floor(epoch / decay_every). Evaluated as a division by the
// reciprocal so decimal factors like 0.1 land exactly on the decimally
// rounded doubles (3.5e-4 -> 3.5e-5 -> 3.5e-6).
double lr_at_epoch(int epoch, const TrainConfig& cfg);

// Identity-balanced batches over the train split: every batch holds exactly
// P distinct identities with K samples each (sampled with replacement when
// an identity has fewer than K train samples). One epoch covers every
// identity at least once; the epoch length is max(ceil(ids/P),
// ceil(train_samples/(P*K))) batches.
std::vector<std::vector<int>> pk_batches(const Dataset& ds, int p, int k, SeededRng& rng);

struct AdamState {
  std::map<std::string, std::pair<Matrix, Matrix>> moments;  // name -> (m, v)
  std::int64_t t = 0;
};

// One bias-corrected Adam update over all tensors (shared step counter).
// A non-finite gradient aborts with a TrainingError naming the tensor.
void adam_step(const std::vector<ParamTensor*>& params, AdamState& state, double lr,
               const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_id = 0.0;
  double loss_c = 0.0;
  double mean_w_c = 1.0;
  double lr = 0.0;
};

struct TrainOutput {
  std::unique_ptr<DiverseNormModel> model;
  AdamState adam;
  SeededRng rng{0};
  TrainConfig train_cfg;
  int epoch = 0;  // epochs completed
  std::vector<EpochStats> log;
};

// Maps dataset person_ids (sorted, possibly sparse) to class indices [0, C).
std::map<int, int> train_label_map(const Dataset& ds);

// Fresh deterministic run: seeds the model from cfg.seed, then runs
// cfg.epochs of pk batches through dual_branch_loss + adam_step. Per-epoch
// batch order comes from a generator derived from (seed, epoch), so resumed
// runs replay the identical stream.
TrainOutput train_model(const Dataset& ds, ModelConfig mcfg, const TrainConfig& tcfg);

// Continue a run (typically loaded from a checkpoint) until total_epochs.
void continue_training(const Dataset& ds, TrainOutput& state, int total_epochs);

// Checkpoint file format (magic DIVNORM, version, tensor table, config and
// rng state; see README for the byte layout). Loading rebuilds the model,
// optimizer state and rng exactly.
void save_checkpoint(const std::string& path, const TrainOutput& state);
TrainOutput load_checkpoint(const std::string& path);

// Training log CSV: epoch,loss_total,loss_id,loss_c,mean_w_c,lr.
void write_train_log(const std::vector<EpochStats>& log, const std::string& path);

}  // namespace divnorm
