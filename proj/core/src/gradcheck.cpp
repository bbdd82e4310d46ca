#include "divnorm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "divnorm/diffnet.hpp"
#include "divnorm/diverse_norm.hpp"
#include "divnorm/numerics.hpp"
#include "divnorm/rng.hpp"
#include "divnorm/whitening.hpp"

namespace divnorm {

double gradcheck_rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

namespace {

constexpr double kLayerTol = 1e-6;
constexpr double kEndToEndTol = 1e-5;

Matrix random_matrix(int rows, int cols, SeededRng& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

double readout(const Matrix& y, const Matrix& c) {
  double s = 0.0;
  for (size_t i = 0; i < y.size(); ++i) s += y.data()[i] * c.data()[i];
  return s;
}

double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, gradcheck_rel_err(analytic[i], numeric[i]));
  }
  return worst;
}

std::vector<double> concat_grads(const std::vector<const Matrix*>& grads) {
  std::vector<double> out;
  for (const Matrix* g : grads) out.insert(out.end(), g->data(), g->data() + g->size());
  return out;
}

// Reads a flat coordinate vector back into a list of matrices.
void scatter(const std::vector<double>& flat, const std::vector<Matrix*>& targets) {
  size_t pos = 0;
  for (Matrix* t : targets) {
    std::copy(flat.begin() + pos, flat.begin() + pos + t->size(), t->data());
    pos += t->size();
  }
}

std::vector<double> gather(const std::vector<const Matrix*>& sources) {
  std::vector<double> out;
  for (const Matrix* s : sources) out.insert(out.end(), s->data(), s->data() + s->size());
  return out;
}

double check_linear(SeededRng& rng) {
  Linear layer("probe", 3, 2, rng);
  Matrix x = random_matrix(4, 3, rng);
  const Matrix c = random_matrix(4, 2, rng);

  layer.weight.zero_grad();
  layer.bias.zero_grad();
  layer.forward(x);
  const Matrix grad_x = layer.backward(c);
  const std::vector<double> analytic =
      concat_grads({&layer.weight.grad, &layer.bias.grad, &grad_x});

  Matrix w0 = layer.weight.value, b0 = layer.bias.value, x0 = x;
  auto f = [&](const std::vector<double>& flat) {
    Matrix w = w0, b = b0, xx = x0;
    scatter(flat, {&w, &b, &xx});
    Linear probe = layer;
    probe.weight.value = w;
    probe.bias.value = b;
    return readout(probe.forward(xx), c);
  };
  const std::vector<double> numeric =
      finite_diff_gradient(f, gather({&w0, &b0, &x0}));
  return max_rel_err(analytic, numeric);
}

double check_sigmoid(SeededRng& rng) {
  Matrix x = random_matrix(3, 4, rng);
  const Matrix c = random_matrix(3, 4, rng);
  const Matrix y = sigmoid(x);
  const Matrix grad_x = sigmoid_backward(y, c);
  auto f = [&](const std::vector<double>& flat) {
    Matrix xx = x;
    scatter(flat, {&xx});
    return readout(sigmoid(xx), c);
  };
  return max_rel_err(concat_grads({&grad_x}), finite_diff_gradient(f, gather({&x})));
}

double check_softmax_ce(SeededRng& rng) {
  const int n = 5, classes = 4;
  Matrix logits = random_matrix(n, classes, rng);
  std::vector<int> labels(n);
  for (int& l : labels) l = rng.below(classes);
  std::vector<double> weights(n);
  for (double& w : weights) w = rng.uniform(0.1, 2.0);

  SoftmaxCrossEntropy ce;
  ce.forward(logits, labels);
  const Matrix grad_logits = ce.backward(weights);
  auto f = [&](const std::vector<double>& flat) {
    Matrix ll = logits;
    scatter(flat, {&ll});
    SoftmaxCrossEntropy probe;
    const std::vector<double> losses = probe.forward(ll, labels);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += weights[i] * losses[i];
    return s;
  };
  return max_rel_err(concat_grads({&grad_logits}), finite_diff_gradient(f, gather({&logits})));
}

double check_gap(SeededRng& rng) {
  const int spatial = 4;
  Matrix x = random_matrix(2, 3 * spatial, rng);
  const Matrix c = random_matrix(2, 3, rng);
  const Matrix grad_x = global_avg_pool_backward(c, spatial);
  auto f = [&](const std::vector<double>& flat) {
    Matrix xx = x;
    scatter(flat, {&xx});
    return readout(global_avg_pool(xx, spatial), c);
  };
  return max_rel_err(concat_grads({&grad_x}), finite_diff_gradient(f, gather({&x})));
}

double check_gate(SeededRng& rng) {
  const int d = 5;
  AttentionGate gate(d, GateConfig{}, rng);
  Matrix psi = random_matrix(4, d, rng);
  const Matrix c = random_matrix(4, d, rng);

  std::vector<ParamTensor*> params;
  gate.collect_params(params);
  for (ParamTensor* p : params) p->zero_grad();
  gate.forward(psi);
  const Matrix grad_psi = gate.backward(c);

  std::vector<const Matrix*> analytic_parts;
  for (ParamTensor* p : params) analytic_parts.push_back(&p->grad);
  analytic_parts.push_back(&grad_psi);
  const std::vector<double> analytic = concat_grads(analytic_parts);

  std::vector<Matrix> values;
  for (ParamTensor* p : params) values.push_back(p->value);
  Matrix psi0 = psi;
  auto f = [&](const std::vector<double>& flat) {
    std::vector<Matrix> v = values;
    Matrix pp = psi0;
    std::vector<Matrix*> targets;
    for (Matrix& m : v) targets.push_back(&m);
    targets.push_back(&pp);
    scatter(flat, targets);
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = v[i];
    const double out = readout(gate.forward(pp), c);
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
    return out;
  };
  std::vector<const Matrix*> sources;
  for (const Matrix& m : values) sources.push_back(&m);
  sources.push_back(&psi0);
  return max_rel_err(analytic, finite_diff_gradient(f, gather(sources)));
}

double check_whiten_newton_schulz(SeededRng& rng) {
  const int n = 8, d = 5;
  Matrix x = random_matrix(n, d, rng);
  const Matrix c = random_matrix(n, d, rng);
  WhiteningState state = WhiteningState::create(d);
  state.method = WhitenMethod::newton_schulz;
  state.mode = WhitenMode::train;

  WhitenContext ctx;
  whiten(x, state, &ctx, /*update_running=*/false);
  const Matrix grad_x = ctx.backward(c);
  auto f = [&](const std::vector<double>& flat) {
    Matrix xx = x;
    scatter(flat, {&xx});
    WhiteningState s = WhiteningState::create(d);
    s.method = WhitenMethod::newton_schulz;
    s.mode = WhitenMode::train;
    return readout(whiten(xx, s, nullptr, false), c);
  };
  return max_rel_err(concat_grads({&grad_x}), finite_diff_gradient(f, gather({&x})));
}

double check_end_to_end(std::uint64_t seed) {
  const int n = 8, d_obs = 6, d_embed = 6, classes = 4;
  SeededRng rng(seed);
  ModelConfig cfg;
  cfg.d_obs = d_obs;
  cfg.d_embed = d_embed;
  cfg.n_classes = classes;
  DiverseNormModel model(cfg, rng);

  Matrix x = random_matrix(n, d_obs, rng);
  std::vector<int> labels(n);
  for (int& l : labels) l = rng.below(classes);

  model.zero_grads();
  const auto breakdown = model.dual_branch_loss(x, labels, nullptr, /*update_running=*/false);
  const std::vector<double> frozen_w = breakdown.w_c;

  const std::vector<ParamTensor*> params = model.params();
  std::vector<const Matrix*> grad_parts;
  std::vector<Matrix> values;
  for (ParamTensor* p : params) {
    grad_parts.push_back(&p->grad);
    values.push_back(p->value);
  }
  const std::vector<double> analytic = concat_grads(grad_parts);

  auto f = [&](const std::vector<double>& flat) {
    size_t pos = 0;
    for (ParamTensor* p : params) {
      std::copy(flat.begin() + pos, flat.begin() + pos + p->value.size(), p->value.data());
      pos += p->value.size();
    }
    const double out = model.dual_branch_loss(x, labels, &frozen_w, false).total;
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
    return out;
  };
  std::vector<const Matrix*> sources;
  for (const Matrix& m : values) sources.push_back(&m);
  return max_rel_err(analytic, finite_diff_gradient(f, gather(sources)));
}

}  // namespace

GradCheckResult run_gradient_checks(std::uint64_t seed, int end_to_end_seeds) {
  GradCheckResult result;
  SeededRng rng(mix_seed(seed, 0x6772616463686Bu));  // "gradchk"

  const std::vector<std::pair<std::string, double (*)(SeededRng&)>> layer_checks = {
      {"linear", &check_linear},
      {"sigmoid", &check_sigmoid},
      {"softmax_cross_entropy", &check_softmax_ce},
      {"global_avg_pool", &check_gap},
      {"attention_gate", &check_gate},
      {"whiten_newton_schulz", &check_whiten_newton_schulz},
  };
  for (const auto& [name, fn] : layer_checks) {
    const double err = fn(rng);
    result.groups.push_back({name, err, kLayerTol});
    result.max_layer_rel_err = std::max(result.max_layer_rel_err, err);
  }

  for (int s = 0; s < end_to_end_seeds; ++s) {
    const double err = check_end_to_end(mix_seed(seed, 1000 + s));
    result.max_end_to_end_rel_err = std::max(result.max_end_to_end_rel_err, err);
  }
  result.groups.push_back(
      {"dual_branch_loss_end_to_end", result.max_end_to_end_rel_err, kEndToEndTol});

  result.pass = result.max_layer_rel_err <= kLayerTol &&
                result.max_end_to_end_rel_err <= kEndToEndTol;
  return result;
}

void print_gradcheck(const GradCheckResult& result, std::ostream& os) {
  for (const auto& g : result.groups) {
    os << (g.max_rel_err <= g.tolerance ? "[ok]  " : "[FAIL] ") << g.name
       << ": max rel err " << g.max_rel_err << " (tolerance " << g.tolerance << ")\n";
  }
  os << (result.pass ? "gradcheck PASS" : "gradcheck FAIL")
     << " (layers " << result.max_layer_rel_err << ", end-to-end "
     << result.max_end_to_end_rel_err << ")\n";
}

}  // namespace divnorm
