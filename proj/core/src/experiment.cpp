#include "divnorm/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "divnorm/errors.hpp"

namespace divnorm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

const std::vector<ExperimentConfig::KeyInfo>& ExperimentConfig::schema() {
  static const std::vector<KeyInfo> kSchema = {
      {"seed", "1", "base seed for generation, training and ablations"},
      {"synth.n_ids", "50", "number of identities"},
      {"synth.outfits_per_id", "5", "outfits per identity (>= 2)"},
      {"synth.samples_per_outfit", "8", "samples per outfit"},
      {"synth.n_cameras", "4", "cameras, assigned round-robin"},
      {"synth.d_id", "8", "identity latent dimension"},
      {"synth.d_c", "8", "clothing latent dimension"},
      {"synth.d_obs", "32", "observation dimension (>= d_id + d_c)"},
      {"synth.noise_std", "0.3", "observation noise standard deviation"},
      {"synth.id_occlusion_rate", "0.2", "probability a sample loses its identity signal"},
      {"synth.clothes_occlusion_rate", "0.2", "probability a sample loses its clothing signal"},
      {"synth.clothes_gain", "2.0", "clothing block scale in the mixing map"},
      {"synth.identity_mixing", "false", "diagnostic mode: mixing map embeds latents directly"},
      {"model.arch", "diverse_norm", "diverse_norm | baseline (single head, plain CE)"},
      {"model.d_embed", "16", "embedding width"},
      {"model.backbone_hidden", "", "comma-separated widths of extra backbone layers"},
      {"model.gate_two_layer", "false", "use the bottlenecked two-layer gate"},
      {"model.gate_reduction", "4", "bottleneck ratio for the two-layer gate"},
      {"model.whiten_method", "newton_schulz", "newton_schulz | exact (train-time W)"},
      {"model.whiten_iterations", "5", "Newton-Schulz iteration count T"},
      {"model.whiten_momentum", "0.1", "running-statistics momentum"},
      {"model.whiten_eps", "1e-5", "covariance ridge"},
      {"train.epochs", "30", "training epochs"},
      {"train.identities_per_batch", "8", "P of the PK sampler"},
      {"train.samples_per_identity", "8", "K of the PK sampler"},
      {"train.lr0", "3.5e-4", "initial learning rate"},
      {"train.lr_decay_every", "20", "epochs between learning-rate decays"},
      {"train.lr_decay_factor", "0.1", "learning-rate decay factor"},
      {"train.adam_beta1", "0.9", "Adam beta1"},
      {"train.adam_beta2", "0.999", "Adam beta2"},
      {"train.adam_eps", "1e-8", "Adam epsilon"},
      {"eval.protocols", "general,sc,cc", "protocols to evaluate"},
      {"eval.strategies", "sim_sum,feat_sum", "similarity strategies to evaluate"},
      {"eval.per_query", "false", "also write per-query AP/rank detail"},
      {"ablate.keep_fractions", "0.25,0.5,0.75,1.0", "drop-clothes sweep points"},
      {"ablate.seeds", "3", "seeds per ablation point (seed, seed+1, ...)"},
      {"io.out_dir", "", "output directory (default $DIVNORM_OUT_DIR or ./out)"},
      {"io.dataset", "", "dataset CSV path (input)"},
      {"io.checkpoint", "", "checkpoint path (input for eval)"},
      {"manifest.command", "", "set by written manifests; informational"},
      {"manifest.formats", "", "set by written manifests; informational"},
  };
  return kSchema;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  for (const KeyInfo& k : schema()) cfg.values_[k.key] = k.default_value;
  if (const char* env = std::getenv("DIVNORM_OUT_DIR"); env && *env) {
    cfg.values_["io.out_dir"] = env;
  }
  if (cfg.values_["io.out_dir"].empty()) cfg.values_["io.out_dir"] = "out";
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  ExperimentConfig cfg = defaults();
  cfg.apply_file(path);
  return cfg;
}

void ExperimentConfig::apply_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file '" + path + "' cannot be opened");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected 'key = value' in '" + path + "', got '" + line + "'", line_no);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ParseError(std::string(e.what()) + " in '" + path + "'", line_no);
    }
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const KeyInfo& k : schema()) {
    if (key == k.key) {
      values_[key] = value;
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int ExperimentConfig::get_int(const std::string& key) const {
  return static_cast<int>(get_i64(key));
}

std::int64_t ExperimentConfig::get_i64(const std::string& key) const {
  const std::string& s = get(key);
  size_t pos = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
  }
  if (pos != s.size()) throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
  return v;
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not an unsigned integer");
  }
  if (pos != s.size()) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not an unsigned integer");
  }
  return v;
}

double ExperimentConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
  }
  return v;
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean (true|false)");
}

std::vector<std::string> ExperimentConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream is(get(key));
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> ExperimentConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : get_list(key)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + item.size()) {
      throw ConfigError("config key '" + key + "': '" + item + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

SynthConfig ExperimentConfig::synth_config() const {
  SynthConfig c;
  c.n_ids = get_int("synth.n_ids");
  c.outfits_per_id = get_int("synth.outfits_per_id");
  c.samples_per_outfit = get_int("synth.samples_per_outfit");
  c.n_cameras = get_int("synth.n_cameras");
  c.d_id = get_int("synth.d_id");
  c.d_c = get_int("synth.d_c");
  c.d_obs = get_int("synth.d_obs");
  c.noise_std = get_double("synth.noise_std");
  c.id_occlusion_rate = get_double("synth.id_occlusion_rate");
  c.clothes_occlusion_rate = get_double("synth.clothes_occlusion_rate");
  c.clothes_gain = get_double("synth.clothes_gain");
  c.identity_mixing = get_bool("synth.identity_mixing");
  c.seed = get_u64("seed");
  return c;
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  const std::string arch = get("model.arch");
  if (arch == "diverse_norm") {
    m.arch = ModelArch::diverse_norm;
  } else if (arch == "baseline") {
    m.arch = ModelArch::baseline;
  } else {
    throw ConfigError("model.arch must be diverse_norm or baseline, got '" + arch + "'");
  }
  m.d_obs = get_int("synth.d_obs");
  m.d_embed = get_int("model.d_embed");
  for (const std::string& w : get_list("model.backbone_hidden")) {
    m.backbone_hidden.push_back(std::stoi(w));
  }
  m.gate.two_layer = get_bool("model.gate_two_layer");
  m.gate.reduction = get_int("model.gate_reduction");
  const std::string method = get("model.whiten_method");
  if (method == "newton_schulz") {
    m.whiten_method = WhitenMethod::newton_schulz;
  } else if (method == "exact") {
    m.whiten_method = WhitenMethod::exact;
  } else {
    throw ConfigError("model.whiten_method must be newton_schulz or exact, got '" + method + "'");
  }
  m.whiten_iterations = get_int("model.whiten_iterations");
  m.whiten_momentum = get_double("model.whiten_momentum");
  m.whiten_eps = get_double("model.whiten_eps");
  return m;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.identities_per_batch = get_int("train.identities_per_batch");
  t.samples_per_identity = get_int("train.samples_per_identity");
  t.epochs = get_int("train.epochs");
  t.lr0 = get_double("train.lr0");
  t.lr_decay_every = get_int("train.lr_decay_every");
  t.lr_decay_factor = get_double("train.lr_decay_factor");
  t.adam_beta1 = get_double("train.adam_beta1");
  t.adam_beta2 = get_double("train.adam_beta2");
  t.adam_eps = get_double("train.adam_eps");
  t.seed = get_u64("seed");
  return t;
}

std::vector<Protocol> ExperimentConfig::protocols() const {
  std::vector<Protocol> out;
  for (const std::string& p : get_list("eval.protocols")) out.push_back(protocol_from_name(p));
  if (out.empty()) throw ConfigError("eval.protocols must not be empty");
  return out;
}

std::vector<Strategy> ExperimentConfig::strategies() const {
  std::vector<Strategy> out;
  for (const std::string& s : get_list("eval.strategies")) out.push_back(strategy_from_name(s));
  if (out.empty()) throw ConfigError("eval.strategies must not be empty");
  return out;
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os << "# divnorm experiment configuration\n";
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

namespace {

constexpr const char* kFormats = "dataset=1;checkpoint=1;report=1";

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  const std::filesystem::path dir = cfg.get("io.out_dir");
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

void require_input_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is required (io." + what + ")");
  if (!std::filesystem::exists(path)) {
    throw ConfigError(what + " file '" + path + "' does not exist");
  }
}

Dataset load_input_dataset(const ExperimentConfig& cfg) {
  require_input_file(cfg.get("io.dataset"), "dataset");
  return load_dataset(cfg.get("io.dataset"));
}

}  // namespace

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const std::string& path) {
  ExperimentConfig snap = cfg;
  snap.set("manifest.command", command);
  snap.set("manifest.formats", kFormats);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_manifest: cannot open '" + path + "'");
  out << snap.serialize();
  if (!out) throw IoError("write_manifest: write failed for '" + path + "'");
}

CommandPaths run_synth(const ExperimentConfig& cfg) {
  const Dataset ds = generate(cfg.synth_config());
  CommandPaths out;
  const std::string data_path = out_path(cfg, "dataset.csv");
  save_dataset(ds, data_path);
  out.written.push_back(data_path);
  const std::string manifest = out_path(cfg, "synth_manifest.txt");
  write_manifest(cfg, "synth", manifest);
  out.written.push_back(manifest);
  return out;
}

CommandPaths run_train(const ExperimentConfig& cfg) {
  const Dataset ds = load_input_dataset(cfg);
  ModelConfig mcfg = cfg.model_config();
  mcfg.d_obs = ds.dim();  // ingested datasets set the observation width
  TrainOutput result = train_model(ds, mcfg, cfg.train_config());
  CommandPaths out;
  const std::string ckpt = out_path(cfg, "checkpoint.bin");
  save_checkpoint(ckpt, result);
  out.written.push_back(ckpt);
  const std::string log = out_path(cfg, "train_log.csv");
  write_train_log(result.log, log);
  out.written.push_back(log);
  const std::string manifest = out_path(cfg, "train_manifest.txt");
  write_manifest(cfg, "train", manifest);
  out.written.push_back(manifest);
  return out;
}

CommandPaths run_eval(const ExperimentConfig& cfg) {
  const std::vector<Protocol> protocols = cfg.protocols();
  const std::vector<Strategy> strategies = cfg.strategies();
  const bool per_query = cfg.get_bool("eval.per_query");

  const Dataset ds = load_input_dataset(cfg);
  require_input_file(cfg.get("io.checkpoint"), "checkpoint");
  TrainOutput state = load_checkpoint(cfg.get("io.checkpoint"));

  const BranchFeatureStore queries = build_store(*state.model, ds, Split::query);
  const BranchFeatureStore gallery = build_store(*state.model, ds, Split::gallery);

  std::vector<EvalReport> reports;
  for (Protocol p : protocols) {
    for (Strategy s : strategies) reports.push_back(evaluate(queries, gallery, p, s));
  }

  CommandPaths out;
  const std::string report_path = out_path(cfg, "report.csv");
  write_report_csv(reports, report_path);
  out.written.push_back(report_path);
  if (per_query) {
    for (const EvalReport& r : reports) {
      const std::string detail = out_path(cfg, "per_query_" + protocol_name(r.protocol) + "_" +
                                                   strategy_name(r.strategy) + ".csv");
      write_per_query_csv(r, detail);
      out.written.push_back(detail);
    }
  }
  const std::string manifest = out_path(cfg, "eval_manifest.txt");
  write_manifest(cfg, "eval", manifest);
  out.written.push_back(manifest);
  return out;
}

CommandPaths run_ablate_query_strategy(const ExperimentConfig& cfg) {
  const std::vector<Protocol> protocols = cfg.protocols();
  const Dataset ds = load_input_dataset(cfg);
  require_input_file(cfg.get("io.checkpoint"), "checkpoint");
  TrainOutput state = load_checkpoint(cfg.get("io.checkpoint"));

  const BranchFeatureStore queries = build_store(*state.model, ds, Split::query);
  const BranchFeatureStore gallery = build_store(*state.model, ds, Split::gallery);

  std::vector<EvalReport> reports;
  for (Protocol p : protocols) {
    reports.push_back(evaluate(queries, gallery, p, Strategy::sim_sum));
    reports.push_back(evaluate(queries, gallery, p, Strategy::feat_sum));
  }
  CommandPaths out;
  const std::string path = out_path(cfg, "query_strategy.csv");
  write_report_csv(reports, path);
  out.written.push_back(path);
  const std::string manifest = out_path(cfg, "query_strategy_manifest.txt");
  write_manifest(cfg, "ablate-query-strategy", manifest);
  out.written.push_back(manifest);
  return out;
}

CommandPaths run_ablate_drop_clothes(const ExperimentConfig& cfg) {
  const std::vector<double> fractions = cfg.get_double_list("ablate.keep_fractions");
  if (fractions.empty()) throw ConfigError("ablate.keep_fractions must not be empty");
  const int n_seeds = cfg.get_int("ablate.seeds");
  if (n_seeds < 1) throw ConfigError("ablate.seeds must be >= 1");

  // Base dataset: an explicit io.dataset if given, else generated in-memory
  // from the synth.* keys.
  Dataset base;
  if (!cfg.get("io.dataset").empty()) {
    base = load_input_dataset(cfg);
  } else {
    base = generate(cfg.synth_config());
  }

  const std::uint64_t base_seed = cfg.get_u64("seed");
  std::ostringstream rows;
  rows << "keep_fraction,seed,mAP,rank1,rank5,rank10,n_queries\n";
  for (double kf : fractions) {
    for (int s = 0; s < n_seeds; ++s) {
      const std::uint64_t run_seed = base_seed + static_cast<std::uint64_t>(s);
      const Dataset ds = drop_outfits(base, kf, run_seed);
      TrainConfig tcfg = cfg.train_config();
      tcfg.seed = run_seed;
      ModelConfig mcfg = cfg.model_config();
      mcfg.d_obs = ds.dim();
      TrainOutput trained = train_model(ds, mcfg, tcfg);
      BranchFeatureStore queries = build_store(*trained.model, ds, Split::query);
      BranchFeatureStore gallery = build_store(*trained.model, ds, Split::gallery);
      const EvalReport r = evaluate(queries, gallery, Protocol::cc, Strategy::sim_sum);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%g,%llu,%.6f,%.6f,%.6f,%.6f,%d\n", kf,
                    static_cast<unsigned long long>(run_seed), r.map,
                    r.cmc.empty() ? 0.0 : r.cmc[0],
                    r.cmc.size() >= 5 ? r.cmc[4] : r.cmc.back(),
                    r.cmc.size() >= 10 ? r.cmc[9] : r.cmc.back(), r.n_queries_evaluated);
      rows << buf;
    }
  }

  CommandPaths out;
  const std::string path = out_path(cfg, "drop_clothes.csv");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("run_ablate_drop_clothes: cannot open '" + path + "'");
  f << rows.str();
  if (!f) throw IoError("run_ablate_drop_clothes: write failed for '" + path + "'");
  out.written.push_back(path);
  const std::string manifest = out_path(cfg, "drop_clothes_manifest.txt");
  write_manifest(cfg, "ablate-drop-clothes", manifest);
  out.written.push_back(manifest);
  return out;
}

}  // namespace divnorm
