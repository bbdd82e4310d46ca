#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "divnorm/diffnet.hpp"
#include "divnorm/matrix.hpp"
#include "divnorm/rng.hpp"
#include "divnorm/whitening.hpp"

namespace divnorm {

struct GateConfig {
  bool two_layer = false;  // squeeze-and-excitation style bottleneck variant
  int reduction = 4;       // bottleneck ratio when two_layer
};

// Channel attention: omega = sigmoid(fc(gap(psi))), one weight per channel
// per sample, strictly inside (0, 1). The default is the single
// fully-connected map d -> d; the optional two-layer variant inserts a
// ReLU bottleneck of width d / reduction.
class AttentionGate {
 public:
  AttentionGate(int dim, const GateConfig& cfg, SeededRng& rng);

  Matrix forward(const Matrix& psi);
  // Accumulates parameter grads, returns the gate's contribution to
  // grad wrt psi.
  Matrix backward(const Matrix& grad_omega);

  void collect_params(std::vector<ParamTensor*>& out);

 private:
  GateConfig cfg_;
  Linear fc_;
  std::unique_ptr<Linear> fc2_;
  Matrix relu_mask_;
  Matrix omega_;
};

// h_id = psi . omega, h_c = psi . (1 - omega), elementwise.
std::pair<Matrix, Matrix> split_features(const Matrix& psi, const Matrix& omega);

struct BranchEmbeddings {
  Matrix psi;
  Matrix omega;  // empty for the baseline arch
  Matrix h_id;
  Matrix h_c;
};

// Relative difficulty scores. The identity-branch weight is the ratio
// 2 L_c / (L_id + L_c) in [0, 2]; the clothing branch is the anchor and
// always carries weight 1. Both-zero losses give weight 1. The scores are
// constants for the backward pass (no gradient flows through them).
struct ReweightScores {
  std::vector<double> w_id;  // all ones
  std::vector<double> w_c;   // in [0, 2]
};
ReweightScores reweight_scores(const std::vector<double>& loss_id,
                               const std::vector<double>& loss_c);

enum class ModelArch { diverse_norm, baseline };

struct ModelConfig {
  ModelArch arch = ModelArch::diverse_norm;
  int d_obs = 32;
  int d_embed = 16;
  int n_classes = 0;                // person identities; filled from the dataset
  std::vector<int> backbone_hidden;  // widths of extra linear layers, default none
  GateConfig gate;
  WhitenMethod whiten_method = WhitenMethod::newton_schulz;
  int whiten_iterations = 5;
  double whiten_momentum = 0.1;
  double whiten_eps = 1e-5;
};

// The full dual-branch model: fully-connected backbone, whitening, channel
// attention split, and two identity classifiers (one per branch). The
// baseline arch keeps only backbone + single classifier and scores plain
// cross entropy; it exists for the no-disentanglement comparison.
class DiverseNormModel {
 public:
  DiverseNormModel(const ModelConfig& cfg, SeededRng& rng);

  struct LossBreakdown {
    double total = 0.0;
    double mean_loss_id = 0.0;
    double mean_loss_c = 0.0;
    double mean_w_c = 1.0;
    std::vector<double> w_c;  // the detached per-sample weights actually used
  };

  // Forward + backward of the training objective
  //   total = (1/n) sum_i [ w_c,i * CE(y_id_i) + CE(y_c_i) ]
  // with w_c computed from the current per-sample losses and detached.
  // Gradients accumulate into params(); call zero_grads() first.
  // frozen_w_c overrides the weights (gradient-checking hook);
  // update_running toggles the running-statistics update.
  LossBreakdown dual_branch_loss(const Matrix& x, const std::vector<int>& labels,
                                 const std::vector<double>* frozen_w_c = nullptr,
                                 bool update_running = true);

  // Frozen-model embeddings from running statistics (whitening in eval
  // mode). Baseline arch: h_id = backbone output, h_c = 0.
  BranchEmbeddings embed_eval(const Matrix& x);

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
  void zero_grads();

  WhiteningState& whitening_state() { return wstate_; }
  const WhiteningState& whitening_state() const { return wstate_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  Matrix backbone_forward(const Matrix& x);
  Matrix backbone_backward(const Matrix& grad);

  ModelConfig cfg_;
  std::vector<Linear> backbone_;
  WhiteningState wstate_;
  std::unique_ptr<AttentionGate> gate_;
  std::unique_ptr<Linear> head_id_;
  std::unique_ptr<Linear> head_c_;
};

}  // namespace divnorm
