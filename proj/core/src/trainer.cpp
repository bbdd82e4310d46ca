#include "divnorm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "divnorm/errors.hpp"

namespace divnorm {

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ContractViolation("lr_at_epoch: negative epoch");
  if (cfg.lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (!(cfg.lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be positive");
  const int k = epoch / cfg.lr_decay_every;
  return cfg.lr0 / std::pow(1.0 / cfg.lr_decay_factor, static_cast<double>(k));
}

std::vector<std::vector<int>> pk_batches(const Dataset& ds, int p, int k, SeededRng& rng) {
  if (p < 1 || k < 1) throw ConfigError("pk_batches: P and K must be >= 1");
  std::map<int, std::vector<int>> by_id;
  int n_train = 0;
  for (int i = 0; i < ds.n_samples(); ++i) {
    if (ds.meta[i].split == Split::train) {
      by_id[ds.meta[i].person_id].push_back(i);
      ++n_train;
    }
  }
  if (n_train == 0) throw ConfigError("pk_batches: train split is empty");
  if (static_cast<int>(by_id.size()) < p) {
    throw ConfigError("pk_batches: only " + std::to_string(by_id.size()) +
                      " identities have train samples, need P = " + std::to_string(p));
  }

  std::vector<int> ids;
  ids.reserve(by_id.size());
  for (const auto& [pid, _] : by_id) ids.push_back(pid);

  const int n_ids = static_cast<int>(ids.size());
  const int batches_for_ids = (n_ids + p - 1) / p;
  const int batches_for_samples = (n_train + p * k - 1) / (p * k);
  const int n_batches = std::max(batches_for_ids, batches_for_samples);

  std::vector<int> queue = ids;
  rng.shuffle(queue);

  std::vector<std::vector<int>> batches;
  batches.reserve(n_batches);
  for (int b = 0; b < n_batches; ++b) {
    std::vector<int> batch_ids;
    std::vector<int> deferred;  // ids popped but already present in this batch
    while (static_cast<int>(batch_ids.size()) < p) {
      if (queue.empty()) {
        queue = ids;
        rng.shuffle(queue);
      }
      const int pid = queue.back();
      queue.pop_back();
      if (std::find(batch_ids.begin(), batch_ids.end(), pid) != batch_ids.end()) {
        deferred.push_back(pid);
      } else {
        batch_ids.push_back(pid);
      }
    }
    // Put skipped ids back so the queue still covers them this epoch.
    for (auto it = deferred.rbegin(); it != deferred.rend(); ++it) queue.push_back(*it);

    std::vector<int> batch;
    batch.reserve(static_cast<size_t>(p) * k);
    for (int pid : batch_ids) {
      const std::vector<int>& pool = by_id[pid];
      if (static_cast<int>(pool.size()) >= k) {
        std::vector<int> shuffled = pool;
        rng.shuffle(shuffled);
        batch.insert(batch.end(), shuffled.begin(), shuffled.begin() + k);
      } else {
        for (int s = 0; s < k; ++s) {
          batch.push_back(pool[rng.below(static_cast<int>(pool.size()))]);
        }
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void adam_step(const std::vector<ParamTensor*>& params, AdamState& state, double lr,
               const TrainConfig& cfg) {
  ++state.t;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (ParamTensor* p : params) {
    if (!p->grad.all_finite()) {
      throw TrainingError("adam_step: non-finite gradient in tensor '" + p->name + "'");
    }
    auto it = state.moments.find(p->name);
    if (it == state.moments.end()) {
      it = state.moments
               .emplace(p->name, std::make_pair(Matrix(p->value.rows(), p->value.cols()),
                                                Matrix(p->value.rows(), p->value.cols())))
               .first;
    }
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data()[i];
      m.data()[i] = b1 * m.data()[i] + (1.0 - b1) * g;
      v.data()[i] = b2 * v.data()[i] + (1.0 - b2) * g * g;
      const double m_hat = m.data()[i] / bc1;
      const double v_hat = v.data()[i] / bc2;
      p->value.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

std::map<int, int> train_label_map(const Dataset& ds) {
  std::set<int> ids;
  for (const SampleMeta& m : ds.meta) {
    if (m.split == Split::train) ids.insert(m.person_id);
  }
  std::map<int, int> out;
  int next = 0;
  for (int pid : ids) out[pid] = next++;
  return out;
}

namespace {

void run_epochs(const Dataset& ds, TrainOutput& state, int from_epoch, int total_epochs) {
  const TrainConfig& tcfg = state.train_cfg;
  const std::map<int, int> labels = train_label_map(ds);
  Matrix batch_x;
  std::vector<int> batch_y;

  for (int epoch = from_epoch; epoch < total_epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, tcfg);
    SeededRng epoch_rng(mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch)));
    const std::vector<std::vector<int>> batches =
        pk_batches(ds, tcfg.identities_per_batch, tcfg.samples_per_identity, epoch_rng);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.mean_w_c = 0.0;
    for (size_t b = 0; b < batches.size(); ++b) {
      const std::vector<int>& idx = batches[b];
      batch_x = Matrix(static_cast<int>(idx.size()), ds.dim());
      batch_y.resize(idx.size());
      for (size_t r = 0; r < idx.size(); ++r) {
        for (int c = 0; c < ds.dim(); ++c) batch_x(static_cast<int>(r), c) = ds.features(idx[r], c);
        batch_y[r] = labels.at(ds.meta[idx[r]].person_id);
      }
      state.model->zero_grads();
      DiverseNormModel::LossBreakdown br;
      try {
        br = state.model->dual_branch_loss(batch_x, batch_y);
        if (!std::isfinite(br.total)) {
          throw TrainingError("non-finite loss " + std::to_string(br.total));
        }
        adam_step(state.model->params(), state.adam, lr, tcfg);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b) + ")");
      }
      stats.loss_total += br.total;
      stats.loss_id += br.mean_loss_id;
      stats.loss_c += br.mean_loss_c;
      stats.mean_w_c += br.mean_w_c;
    }
    const double nb = static_cast<double>(batches.size());
    stats.loss_total /= nb;
    stats.loss_id /= nb;
    stats.loss_c /= nb;
    stats.mean_w_c /= nb;
    state.log.push_back(stats);
    state.epoch = epoch + 1;
  }
}

}  // namespace

TrainOutput train_model(const Dataset& ds, ModelConfig mcfg, const TrainConfig& tcfg) {
  if (tcfg.epochs < 1) throw ConfigError("train_model: epochs must be >= 1");
  const std::map<int, int> labels = train_label_map(ds);
  if (labels.empty()) throw ConfigError("train_model: dataset has no train split");
  const int n_classes = static_cast<int>(labels.size());
  if (mcfg.n_classes == 0) {
    mcfg.n_classes = n_classes;
  } else if (mcfg.n_classes < n_classes) {
    throw ConfigError("train_model: n_classes " + std::to_string(mcfg.n_classes) +
                      " smaller than identity count " + std::to_string(n_classes));
  }
  if (mcfg.d_obs != ds.dim()) {
    throw ConfigError("train_model: model d_obs " + std::to_string(mcfg.d_obs) +
                      " does not match dataset dimension " + std::to_string(ds.dim()));
  }

  TrainOutput state;
  state.train_cfg = tcfg;
  state.rng = SeededRng(tcfg.seed);
  state.model = std::make_unique<DiverseNormModel>(mcfg, state.rng);
  run_epochs(ds, state, 0, tcfg.epochs);
  return state;
}

void continue_training(const Dataset& ds, TrainOutput& state, int total_epochs) {
  if (total_epochs < state.epoch) {
    throw ConfigError("continue_training: target epochs " + std::to_string(total_epochs) +
                      " below completed " + std::to_string(state.epoch));
  }
  run_epochs(ds, state, state.epoch, total_epochs);
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[7] = {'D', 'I', 'V', 'N', 'O', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

void put_tensor(std::string& out, const std::string& name, const Matrix& m) {
  put_str(out, name);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (size_t i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
  }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s = data_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  Matrix tensor(std::string* name) {
    *name = str();
    const int rows = static_cast<int>(u32());
    const int cols = static_cast<int>(u32());
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  unsigned char byte() { return static_cast<unsigned char>(data_[pos_++]); }
  void need(size_t n) {
    if (pos_ + n > data_.size()) {
      throw ParseError("checkpoint '" + path_ + "' truncated at byte " + std::to_string(pos_));
    }
  }
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

std::string config_block(const TrainOutput& state) {
  const ModelConfig& m = state.model->config();
  const TrainConfig& t = state.train_cfg;
  std::ostringstream os;
  os.precision(17);
  os << "arch=" << (m.arch == ModelArch::diverse_norm ? "diverse_norm" : "baseline") << '\n'
     << "d_obs=" << m.d_obs << '\n'
     << "d_embed=" << m.d_embed << '\n'
     << "n_classes=" << m.n_classes << '\n';
  os << "backbone_hidden=";
  for (size_t i = 0; i < m.backbone_hidden.size(); ++i) {
    if (i) os << ' ';
    os << m.backbone_hidden[i];
  }
  os << '\n';
  os << "gate_two_layer=" << (m.gate.two_layer ? 1 : 0) << '\n'
     << "gate_reduction=" << m.gate.reduction << '\n'
     << "whiten_method=" << (m.whiten_method == WhitenMethod::exact ? "exact" : "newton_schulz")
     << '\n'
     << "whiten_iterations=" << m.whiten_iterations << '\n'
     << "whiten_momentum=" << m.whiten_momentum << '\n'
     << "whiten_eps=" << m.whiten_eps << '\n'
     << "identities_per_batch=" << t.identities_per_batch << '\n'
     << "samples_per_identity=" << t.samples_per_identity << '\n'
     << "epochs=" << t.epochs << '\n'
     << "lr0=" << t.lr0 << '\n'
     << "lr_decay_every=" << t.lr_decay_every << '\n'
     << "lr_decay_factor=" << t.lr_decay_factor << '\n'
     << "adam_beta1=" << t.adam_beta1 << '\n'
     << "adam_beta2=" << t.adam_beta2 << '\n'
     << "adam_eps=" << t.adam_eps << '\n'
     << "seed=" << t.seed << '\n'
     << "epoch=" << state.epoch << '\n'
     << "adam_t=" << state.adam.t << '\n';
  return os.str();
}

std::map<std::string, std::string> parse_config_block(const std::string& block,
                                                      const std::string& path) {
  std::map<std::string, std::string> kv;
  std::istringstream is(block);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("checkpoint '" + path + "': bad config line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainOutput& state) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);

  // Tensor table: model parameters, whitening statistics, Adam moments.
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (const ParamTensor* p : state.model->params()) tensors.emplace_back(p->name, &p->value);
  const WhiteningState& ws = state.model->whitening_state();
  tensors.emplace_back("whiten.running_mean", &ws.running_mean);
  tensors.emplace_back("whiten.running_cov", &ws.running_cov);
  Matrix initialized(1, 1, ws.initialized ? 1.0 : 0.0);
  tensors.emplace_back("whiten.initialized", &initialized);
  for (const auto& [name, mv] : state.adam.moments) {
    tensors.emplace_back("adam.m." + name, &mv.first);
    tensors.emplace_back("adam.v." + name, &mv.second);
  }
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) put_tensor(out, name, *m);

  put_str(out, config_block(state));
  put_str(out, state.rng.serialize());

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

TrainOutput load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string data = buf.str();

  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("'" + path + "' is not a DIVNORM checkpoint (bad magic)");
  }
  const std::string payload = data.substr(sizeof(kMagic));
  Reader rd(payload, path);
  const std::uint32_t version = rd.u32();
  if (version != kVersion) {
    throw ParseError("checkpoint '" + path + "' has unsupported version " +
                     std::to_string(version));
  }
  const std::uint32_t n_tensors = rd.u32();
  std::map<std::string, Matrix> tensors;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name;
    Matrix m = rd.tensor(&name);
    tensors.emplace(std::move(name), std::move(m));
  }
  const std::map<std::string, std::string> kv = parse_config_block(rd.str(), path);
  const std::string rng_state = rd.str();
  if (!rd.done()) throw ParseError("checkpoint '" + path + "' has trailing bytes");

  auto req = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("checkpoint '" + path + "' missing key '" + key + "'");
    return it->second;
  };

  ModelConfig mcfg;
  mcfg.arch = req("arch") == "baseline" ? ModelArch::baseline : ModelArch::diverse_norm;
  mcfg.d_obs = std::stoi(req("d_obs"));
  mcfg.d_embed = std::stoi(req("d_embed"));
  mcfg.n_classes = std::stoi(req("n_classes"));
  {
    std::istringstream hs(req("backbone_hidden"));
    int w;
    while (hs >> w) mcfg.backbone_hidden.push_back(w);
  }
  mcfg.gate.two_layer = req("gate_two_layer") == "1";
  mcfg.gate.reduction = std::stoi(req("gate_reduction"));
  mcfg.whiten_method =
      req("whiten_method") == "exact" ? WhitenMethod::exact : WhitenMethod::newton_schulz;
  mcfg.whiten_iterations = std::stoi(req("whiten_iterations"));
  mcfg.whiten_momentum = std::stod(req("whiten_momentum"));
  mcfg.whiten_eps = std::stod(req("whiten_eps"));

  TrainOutput state;
  state.train_cfg.identities_per_batch = std::stoi(req("identities_per_batch"));
  state.train_cfg.samples_per_identity = std::stoi(req("samples_per_identity"));
  state.train_cfg.epochs = std::stoi(req("epochs"));
  state.train_cfg.lr0 = std::stod(req("lr0"));
  state.train_cfg.lr_decay_every = std::stoi(req("lr_decay_every"));
  state.train_cfg.lr_decay_factor = std::stod(req("lr_decay_factor"));
  state.train_cfg.adam_beta1 = std::stod(req("adam_beta1"));
  state.train_cfg.adam_beta2 = std::stod(req("adam_beta2"));
  state.train_cfg.adam_eps = std::stod(req("adam_eps"));
  state.train_cfg.seed = std::stoull(req("seed"));
  state.epoch = std::stoi(req("epoch"));
  state.adam.t = std::stoll(req("adam_t"));
  state.rng = SeededRng::deserialize(rng_state);

  SeededRng init_rng(state.train_cfg.seed);  // values overwritten below
  state.model = std::make_unique<DiverseNormModel>(mcfg, init_rng);

  auto take = [&](const std::string& name) -> Matrix {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw ParseError("checkpoint '" + path + "' missing tensor '" + name + "'");
    }
    Matrix m = std::move(it->second);
    tensors.erase(it);
    return m;
  };

  for (ParamTensor* p : state.model->params()) {
    Matrix v = take(p->name);
    if (!v.same_shape(p->value)) {
      throw ParseError("checkpoint '" + path + "': tensor '" + p->name + "' has shape " +
                       std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                       ", expected " + std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()));
    }
    p->value = std::move(v);
    if (const auto m_it = tensors.find("adam.m." + p->name); m_it != tensors.end()) {
      Matrix m = std::move(m_it->second);
      tensors.erase(m_it);
      Matrix v2 = take("adam.v." + p->name);
      state.adam.moments.emplace(p->name, std::make_pair(std::move(m), std::move(v2)));
    }
  }
  WhiteningState& ws = state.model->whitening_state();
  ws.running_mean = take("whiten.running_mean");
  ws.running_cov = take("whiten.running_cov");
  ws.initialized = take("whiten.initialized")(0, 0) != 0.0;
  if (!tensors.empty()) {
    throw ParseError("checkpoint '" + path + "' has unexpected tensor '" +
                     tensors.begin()->first + "'");
  }
  return state;
}

void write_train_log(const std::vector<EpochStats>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_train_log: cannot open '" + path + "'");
  out << "epoch,loss_total,loss_id,loss_c,mean_w_c,lr\n";
  char buf[160];
  for (const EpochStats& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.loss_total,
                  e.loss_id, e.loss_c, e.mean_w_c, e.lr);
    out << buf;
  }
  if (!out) throw IoError("write_train_log: write failed for '" + path + "'");
}

}  // namespace divnorm
