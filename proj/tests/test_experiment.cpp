#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "divnorm/errors.hpp"
#include "divnorm/experiment.hpp"

using namespace divnorm;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("divnorm_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"divnorm"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("config: defaults cover every key and are documented") {
  const ExperimentConfig cfg = ExperimentConfig::defaults();
  for (const auto& info : ExperimentConfig::schema()) {
    CHECK(std::string(info.doc).size() > 0);
    CHECK_NOTHROW(cfg.get(info.key));
  }
  CHECK(cfg.get_int("synth.n_ids") == 50);
  CHECK(cfg.get_double("train.lr0") == 3.5e-4);
  CHECK(cfg.get_bool("synth.identity_mixing") == false);
}

TEST_CASE("config: file parsing, comments, precedence and unknown keys") {
  TempDir tmp;
  const std::string path = tmp.file("exp.cfg");
  {
    std::ofstream f(path);
    f << "# comment line\n";
    f << "train.epochs = 7   # trailing comment\n";
    f << "\n";
    f << "eval.protocols = cc\n";
  }
  ExperimentConfig cfg = ExperimentConfig::from_file(path);
  CHECK(cfg.get_int("train.epochs") == 7);
  CHECK(cfg.protocols().size() == 1);
  cfg.set("train.epochs", "9");  // later set wins
  CHECK(cfg.get_int("train.epochs") == 9);

  {
    std::ofstream f(path);
    f << "not_a_real_key = 3\n";
  }
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_file(path),
                       doctest::Contains("unknown config key"), ParseError);

  {
    std::ofstream f(path);
    f << "just a line without equals\n";
  }
  CHECK_THROWS_AS(ExperimentConfig::from_file(path), ParseError);

  CHECK_THROWS_AS(ExperimentConfig::defaults().set("nope", "1"), ConfigError);
}

TEST_CASE("config: typed accessors validate") {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  cfg.set("train.epochs", "abc");
  CHECK_THROWS_AS(cfg.get_int("train.epochs"), ConfigError);
  cfg.set("synth.noise_std", "0.5x");
  CHECK_THROWS_AS(cfg.get_double("synth.noise_std"), ConfigError);
  cfg.set("eval.per_query", "maybe");
  CHECK_THROWS_AS(cfg.get_bool("eval.per_query"), ConfigError);
  cfg.set("eval.strategies", "");
  CHECK_THROWS_AS(cfg.strategies(), ConfigError);
}

TEST_CASE("config: serialization reparses to the same values") {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  cfg.set("train.epochs", "3");
  cfg.set("io.out_dir", "/tmp/somewhere");
  TempDir tmp;
  const std::string path = tmp.file("round.cfg");
  {
    std::ofstream f(path, std::ios::binary);
    f << cfg.serialize();
  }
  const ExperimentConfig again = ExperimentConfig::from_file(path);
  CHECK(again.serialize() == cfg.serialize());
}

TEST_CASE("synth -> train -> eval pipeline through the experiment layer") {
  TempDir tmp;
  ExperimentConfig cfg = ExperimentConfig::defaults();
  cfg.set("io.out_dir", tmp.file("run"));
  cfg.set("synth.n_ids", "8");
  cfg.set("synth.outfits_per_id", "3");
  cfg.set("synth.samples_per_outfit", "4");
  cfg.set("synth.d_id", "3");
  cfg.set("synth.d_c", "3");
  cfg.set("synth.d_obs", "8");
  cfg.set("model.d_embed", "6");
  cfg.set("train.epochs", "2");
  cfg.set("train.identities_per_batch", "4");
  cfg.set("train.samples_per_identity", "4");

  run_synth(cfg);
  const std::string dataset = tmp.file("run") + "/dataset.csv";
  CHECK(fs::exists(dataset));

  cfg.set("io.dataset", dataset);
  run_train(cfg);
  const std::string ckpt = tmp.file("run") + "/checkpoint.bin";
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(tmp.file("run") + "/train_log.csv"));

  cfg.set("io.checkpoint", ckpt);
  cfg.set("eval.per_query", "true");
  run_eval(cfg);
  const std::string report = tmp.file("run") + "/report.csv";
  CHECK(fs::exists(report));
  CHECK(fs::exists(tmp.file("run") + "/per_query_general_sim_sum.csv"));

  // Byte-identical rerun of every stage from its manifest.
  {
    ExperimentConfig again = ExperimentConfig::from_file(tmp.file("run") + "/synth_manifest.txt");
    again.set("io.out_dir", tmp.file("run2"));
    run_synth(again);
    CHECK(read_file(dataset) == read_file(tmp.file("run2") + "/dataset.csv"));
  }
  {
    ExperimentConfig again = ExperimentConfig::from_file(tmp.file("run") + "/train_manifest.txt");
    again.set("io.out_dir", tmp.file("run3"));
    run_train(again);
    CHECK(read_file(ckpt) == read_file(tmp.file("run3") + "/checkpoint.bin"));
    CHECK(read_file(tmp.file("run") + "/train_log.csv") ==
          read_file(tmp.file("run3") + "/train_log.csv"));
  }
  {
    ExperimentConfig again = ExperimentConfig::from_file(tmp.file("run") + "/eval_manifest.txt");
    again.set("io.out_dir", tmp.file("run4"));
    run_eval(again);
    CHECK(read_file(report) == read_file(tmp.file("run4") + "/report.csv"));
  }

  // Ablations reuse the same artifacts.
  run_ablate_query_strategy(cfg);
  CHECK(fs::exists(tmp.file("run") + "/query_strategy.csv"));
  ExperimentConfig sweep = cfg;
  sweep.set("ablate.keep_fractions", "1.0");
  sweep.set("ablate.seeds", "1");
  run_ablate_drop_clothes(sweep);
  const std::string trend = read_file(tmp.file("run") + "/drop_clothes.csv");
  CHECK(trend.find("keep_fraction,seed,mAP,rank1,rank5,rank10,n_queries") == 0);
  // one header + exactly one row per (fraction, seed)
  CHECK(std::count(trend.begin(), trend.end(), '\n') == 2);
}

TEST_CASE("ingested features with a non-default width train and evaluate") {
  TempDir tmp;
  // Stand-in for externally extracted features: 20-dimensional.
  SynthConfig scfg;
  scfg.n_ids = 6;
  scfg.outfits_per_id = 3;
  scfg.samples_per_outfit = 4;
  scfg.d_id = 4;
  scfg.d_c = 4;
  scfg.d_obs = 20;
  scfg.seed = 31;
  const std::string external = tmp.file("external.csv");
  save_dataset(generate(scfg), external);

  ExperimentConfig cfg = ExperimentConfig::defaults();  // synth.d_obs stays 32
  cfg.set("io.out_dir", tmp.file("run"));
  cfg.set("io.dataset", external);
  cfg.set("model.d_embed", "6");
  cfg.set("train.epochs", "2");
  cfg.set("train.identities_per_batch", "3");
  cfg.set("train.samples_per_identity", "4");
  run_train(cfg);
  cfg.set("io.checkpoint", tmp.file("run") + "/checkpoint.bin");
  run_eval(cfg);
  CHECK(fs::exists(tmp.file("run") + "/report.csv"));
}

TEST_CASE("experiment validation failures surface before compute") {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  cfg.set("eval.strategies", "");
  CHECK_THROWS_AS(run_eval(cfg), ConfigError);

  ExperimentConfig missing = ExperimentConfig::defaults();
  missing.set("io.dataset", "/definitely/not/here.csv");
  CHECK_THROWS_WITH_AS(run_train(missing), doctest::Contains("does not exist"), ConfigError);
}

TEST_CASE("commands never mutate their input files") {
  TempDir tmp;
  ExperimentConfig cfg = ExperimentConfig::defaults();
  cfg.set("io.out_dir", tmp.file("in"));
  cfg.set("synth.n_ids", "6");
  cfg.set("synth.outfits_per_id", "3");
  cfg.set("synth.samples_per_outfit", "2");
  cfg.set("synth.d_id", "2");
  cfg.set("synth.d_c", "2");
  cfg.set("synth.d_obs", "6");
  cfg.set("model.d_embed", "4");
  cfg.set("train.epochs", "2");
  cfg.set("train.identities_per_batch", "3");
  cfg.set("train.samples_per_identity", "2");
  run_synth(cfg);
  cfg.set("io.dataset", tmp.file("in") + "/dataset.csv");
  run_train(cfg);
  cfg.set("io.checkpoint", tmp.file("in") + "/checkpoint.bin");

  const std::string dataset_before = read_file(cfg.get("io.dataset"));
  const std::string ckpt_before = read_file(cfg.get("io.checkpoint"));
  cfg.set("io.out_dir", tmp.file("out"));
  run_eval(cfg);
  run_ablate_query_strategy(cfg);
  ExperimentConfig sweep = cfg;
  sweep.set("ablate.keep_fractions", "0.5");
  sweep.set("ablate.seeds", "1");
  run_ablate_drop_clothes(sweep);
  CHECK(read_file(cfg.get("io.dataset")) == dataset_before);
  CHECK(read_file(cfg.get("io.checkpoint")) == ckpt_before);
}

TEST_CASE("cli: exit codes and flag precedence") {
  TempDir tmp;
  CHECK(cli({"synth", "--out", tmp.file("a"), "--seed", "3", "--set",
             "synth.n_ids=6", "--set", "synth.outfits_per_id=3", "--set",
             "synth.samples_per_outfit=2", "--set", "synth.d_id=2", "--set", "synth.d_c=2",
             "--set", "synth.d_obs=6"}) == 0);
  CHECK(fs::exists(tmp.file("a") + "/dataset.csv"));

  // Manifest records the resolved seed; rerunning reproduces bytes.
  CHECK(cli({"synth", "--config", tmp.file("a") + "/synth_manifest.txt", "--out",
             tmp.file("b")}) == 0);
  CHECK(read_file(tmp.file("a") + "/dataset.csv") == read_file(tmp.file("b") + "/dataset.csv"));

  CHECK(cli({"eval", "--dataset", tmp.file("a") + "/dataset.csv", "--checkpoint",
             tmp.file("a") + "/nope.bin", "--out", tmp.file("c")}) == 1);
  CHECK(cli({"not-a-command"}) == 1);
  CHECK(cli({"synth", "--set", "bad_key=1", "--out", tmp.file("d")}) == 1);
  CHECK(cli({}) == 1);
  CHECK(cli({"--help"}) == 0);
}
