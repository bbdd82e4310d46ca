#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "divnorm/diverse_norm.hpp"
#include "divnorm/retrieval.hpp"
#include "divnorm/synth.hpp"
#include "divnorm/trainer.hpp"

namespace divnorm {

// Flat `key = value` experiment configuration with `#` comments. Every key
// has a documented default; unknown keys are rejected. Precedence is
// CLI flag > config file > environment (out dir only) > built-in default.
class ExperimentConfig {
 public:
  struct KeyInfo {
    const char* key;
    const char* default_value;
    const char* doc;
  };
  static const std::vector<KeyInfo>& schema();

  // All keys present at their defaults; io.out_dir honors $DIVNORM_OUT_DIR.
  static ExperimentConfig defaults();
  static ExperimentConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);  // known keys only
  void apply_file(const std::string& path);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::int64_t get_i64(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  SynthConfig synth_config() const;
  ModelConfig model_config() const;  // n_classes left 0, filled from data
  TrainConfig train_config() const;
  std::vector<Protocol> protocols() const;
  std::vector<Strategy> strategies() const;

  // Deterministic text rendering (sorted keys), reparseable by from_file.
  std::string serialize() const;

 private:
  std::map<std::string, std::string> values_;
};

// Every command writes a manifest next to its outputs: the full resolved
// config plus the command name and format versions. Re-running the command
// with the manifest as --config reproduces the outputs byte for byte.
void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const std::string& path);

struct CommandPaths {
  std::vector<std::string> written;
};

CommandPaths run_synth(const ExperimentConfig& cfg);
CommandPaths run_train(const ExperimentConfig& cfg);
CommandPaths run_eval(const ExperimentConfig& cfg);
CommandPaths run_ablate_query_strategy(const ExperimentConfig& cfg);
CommandPaths run_ablate_drop_clothes(const ExperimentConfig& cfg);

}  // namespace divnorm
