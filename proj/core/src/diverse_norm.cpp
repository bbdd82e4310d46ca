#include "divnorm/diverse_norm.hpp"

#include <cmath>

#include "divnorm/errors.hpp"

namespace divnorm {

AttentionGate::AttentionGate(int dim, const GateConfig& cfg, SeededRng& rng)
    : cfg_(cfg),
      fc_("gate.fc", dim, cfg.two_layer ? std::max(1, dim / cfg.reduction) : dim, rng) {
  if (cfg_.two_layer) {
    fc2_ = std::make_unique<Linear>("gate.fc2", std::max(1, dim / cfg_.reduction), dim, rng);
  }
}

Matrix AttentionGate::forward(const Matrix& psi) {
  // Backbone output is a vector per sample, so the channel-wise global
  // average pool is the identity (spatial extent 1).
  Matrix z = fc_.forward(global_avg_pool(psi, 1));
  if (cfg_.two_layer) {
    relu_mask_ = Matrix(z.rows(), z.cols());
    for (int i = 0; i < z.rows(); ++i) {
      for (int j = 0; j < z.cols(); ++j) {
        if (z(i, j) > 0.0) {
          relu_mask_(i, j) = 1.0;
        } else {
          z(i, j) = 0.0;
        }
      }
    }
    z = fc2_->forward(z);
  }
  omega_ = sigmoid(z);
  return omega_;
}

Matrix AttentionGate::backward(const Matrix& grad_omega) {
  Matrix g = sigmoid_backward(omega_, grad_omega);
  if (cfg_.two_layer) {
    g = fc2_->backward(g);
    g = g.hadamard(relu_mask_);
  }
  return global_avg_pool_backward(fc_.backward(g), 1);
}

void AttentionGate::collect_params(std::vector<ParamTensor*>& out) {
  out.push_back(&fc_.weight);
  out.push_back(&fc_.bias);
  if (fc2_) {
    out.push_back(&fc2_->weight);
    out.push_back(&fc2_->bias);
  }
}

std::pair<Matrix, Matrix> split_features(const Matrix& psi, const Matrix& omega) {
  if (!psi.same_shape(omega)) throw ContractViolation("split_features: shape mismatch");
  Matrix h_id = psi.hadamard(omega);
  Matrix h_c(psi.rows(), psi.cols());
  for (int i = 0; i < psi.rows(); ++i)
    for (int j = 0; j < psi.cols(); ++j) h_c(i, j) = psi(i, j) * (1.0 - omega(i, j));
  return {std::move(h_id), std::move(h_c)};
}

ReweightScores reweight_scores(const std::vector<double>& loss_id,
                               const std::vector<double>& loss_c) {
  if (loss_id.size() != loss_c.size()) {
    throw ContractViolation("reweight_scores: loss vectors differ in length");
  }
  ReweightScores out;
  out.w_id.assign(loss_id.size(), 1.0);
  out.w_c.resize(loss_id.size());
  for (size_t i = 0; i < loss_id.size(); ++i) {
    if (loss_id[i] < 0.0 || loss_c[i] < 0.0) {
      throw ContractViolation("reweight_scores: negative loss at sample " + std::to_string(i));
    }
    const double sum = loss_id[i] + loss_c[i];
    out.w_c[i] = (sum == 0.0) ? 1.0 : 2.0 * loss_c[i] / sum;
  }
  return out;
}

DiverseNormModel::DiverseNormModel(const ModelConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  if (cfg.d_obs < 1 || cfg.d_embed < 1 || cfg.n_classes < 1) {
    throw ConfigError("model config: dimensions and class count must be positive");
  }
  int d_in = cfg.d_obs;
  int layer = 0;
  for (int width : cfg.backbone_hidden) {
    backbone_.emplace_back("backbone." + std::to_string(layer++), d_in, width, rng);
    d_in = width;
  }
  backbone_.emplace_back("backbone." + std::to_string(layer), d_in, cfg.d_embed, rng);

  wstate_ = WhiteningState::create(cfg.d_embed);
  wstate_.method = cfg.whiten_method;
  wstate_.iterations = cfg.whiten_iterations;
  wstate_.momentum = cfg.whiten_momentum;
  wstate_.eps = cfg.whiten_eps;

  if (cfg.arch == ModelArch::diverse_norm) {
    gate_ = std::make_unique<AttentionGate>(cfg.d_embed, cfg.gate, rng);
  }
  head_id_ = std::make_unique<Linear>("head_id", cfg.d_embed, cfg.n_classes, rng);
  if (cfg.arch == ModelArch::diverse_norm) {
    head_c_ = std::make_unique<Linear>("head_c", cfg.d_embed, cfg.n_classes, rng);
  }
}

Matrix DiverseNormModel::backbone_forward(const Matrix& x) {
  Matrix h = x;
  for (Linear& l : backbone_) h = l.forward(h);
  return h;
}

Matrix DiverseNormModel::backbone_backward(const Matrix& grad) {
  Matrix g = grad;
  for (auto it = backbone_.rbegin(); it != backbone_.rend(); ++it) g = it->backward(g);
  return g;
}

DiverseNormModel::LossBreakdown DiverseNormModel::dual_branch_loss(
    const Matrix& x, const std::vector<int>& labels, const std::vector<double>* frozen_w_c,
    bool update_running) {
  const int n = x.rows();
  if (static_cast<int>(labels.size()) != n) {
    throw ContractViolation("dual_branch_loss: label count mismatch");
  }
  LossBreakdown out;
  const Matrix h = backbone_forward(x);

  if (cfg_.arch == ModelArch::baseline) {
    SoftmaxCrossEntropy ce;
    const std::vector<double> losses = ce.forward(head_id_->forward(h), labels);
    double mean = 0.0;
    for (double l : losses) mean += l;
    mean /= n;
    std::vector<double> grad_scale(n, 1.0 / n);
    backbone_backward(head_id_->backward(ce.backward(grad_scale)));
    out.total = mean;
    out.mean_loss_id = mean;
    out.mean_loss_c = 0.0;
    out.mean_w_c = 1.0;
    out.w_c.assign(n, 1.0);
    return out;
  }

  wstate_.mode = WhitenMode::train;
  WhitenContext wctx;
  const Matrix psi = whiten(h, wstate_, &wctx, update_running);
  const Matrix omega = gate_->forward(psi);
  auto [h_id, h_c] = split_features(psi, omega);

  SoftmaxCrossEntropy ce_id;
  SoftmaxCrossEntropy ce_c;
  const std::vector<double> loss_id = ce_id.forward(head_id_->forward(h_id), labels);
  const std::vector<double> loss_c = ce_c.forward(head_c_->forward(h_c), labels);

  std::vector<double> w_c;
  if (frozen_w_c) {
    if (static_cast<int>(frozen_w_c->size()) != n) {
      throw ContractViolation("dual_branch_loss: frozen_w_c size mismatch");
    }
    w_c = *frozen_w_c;
  } else {
    w_c = reweight_scores(loss_id, loss_c).w_c;
  }

  double total = 0.0, sum_id = 0.0, sum_c = 0.0, sum_w = 0.0;
  for (int i = 0; i < n; ++i) {
    total += w_c[i] * loss_id[i] + loss_c[i];
    sum_id += loss_id[i];
    sum_c += loss_c[i];
    sum_w += w_c[i];
  }
  out.total = total / n;
  out.mean_loss_id = sum_id / n;
  out.mean_loss_c = sum_c / n;
  out.mean_w_c = sum_w / n;
  out.w_c = w_c;

  // Backward. The weights are constants: d total / d loss_id_i = w_c_i / n,
  // d total / d loss_c_i = 1 / n.
  std::vector<double> g_id(n), g_c(n, 1.0 / n);
  for (int i = 0; i < n; ++i) g_id[i] = w_c[i] / n;
  const Matrix grad_h_id = head_id_->backward(ce_id.backward(g_id));
  const Matrix grad_h_c = head_c_->backward(ce_c.backward(g_c));

  // h_id = psi . omega, h_c = psi . (1 - omega)
  Matrix grad_psi(psi.rows(), psi.cols());
  Matrix grad_omega(psi.rows(), psi.cols());
  for (int i = 0; i < psi.rows(); ++i) {
    for (int j = 0; j < psi.cols(); ++j) {
      grad_psi(i, j) = grad_h_id(i, j) * omega(i, j) + grad_h_c(i, j) * (1.0 - omega(i, j));
      grad_omega(i, j) = (grad_h_id(i, j) - grad_h_c(i, j)) * psi(i, j);
    }
  }
  grad_psi += gate_->backward(grad_omega);
  backbone_backward(wctx.backward(grad_psi));
  return out;
}

BranchEmbeddings DiverseNormModel::embed_eval(const Matrix& x) {
  BranchEmbeddings out;
  const Matrix h = backbone_forward(x);
  if (cfg_.arch == ModelArch::baseline) {
    out.psi = h;
    out.h_id = h;
    out.h_c = Matrix(h.rows(), h.cols());
    return out;
  }
  wstate_.mode = WhitenMode::eval;
  out.psi = whiten(h, wstate_);
  out.omega = gate_->forward(out.psi);
  auto [h_id, h_c] = split_features(out.psi, out.omega);
  out.h_id = std::move(h_id);
  out.h_c = std::move(h_c);
  return out;
}

std::vector<ParamTensor*> DiverseNormModel::params() {
  std::vector<ParamTensor*> out;
  for (Linear& l : backbone_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  if (gate_) gate_->collect_params(out);
  out.push_back(&head_id_->weight);
  out.push_back(&head_id_->bias);
  if (head_c_) {
    out.push_back(&head_c_->weight);
    out.push_back(&head_c_->bias);
  }
  return out;
}

std::vector<const ParamTensor*> DiverseNormModel::params() const {
  std::vector<const ParamTensor*> out;
  auto mut = const_cast<DiverseNormModel*>(this)->params();
  out.assign(mut.begin(), mut.end());
  return out;
}

void DiverseNormModel::zero_grads() {
  for (ParamTensor* p : params()) p->zero_grad();
}

}  // namespace divnorm
