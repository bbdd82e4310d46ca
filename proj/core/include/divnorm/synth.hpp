#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "divnorm/matrix.hpp"

namespace divnorm {

enum class Split { train, query, gallery };

std::string split_name(Split s);
Split split_from_name(const std::string& name);  // throws ParseError

struct SampleMeta {
  std::int64_t sample_id = 0;
  int person_id = 0;
  int clothes_id = 0;  // globally unique per outfit, maps to one person
  int camera_id = 0;
  Split split = Split::train;
};

// Controllable cloth-changing surrogate. Observations are a fixed seeded
// linear mix of a per-identity latent and a per-outfit latent plus noise;
// per sample, either latent's contribution can be zeroed (occlusion). The
// clothing block of the mixing map is scaled up so clothing dominates raw
// feature magnitude, which is the bias the anchor branch assumes.
struct SynthConfig {
  int n_ids = 50;
  int outfits_per_id = 5;
  int samples_per_outfit = 8;
  int n_cameras = 4;
  int d_id = 8;
  int d_c = 8;
  int d_obs = 32;
  double noise_std = 0.3;
  double id_occlusion_rate = 0.2;
  double clothes_occlusion_rate = 0.2;
  double clothes_gain = 2.0;
  // Diagnostic mode: the mixing map embeds the latent coordinates directly
  // (top block identity, no gain, remaining rows zero).
  bool identity_mixing = false;
  std::uint64_t seed = 1;
};

struct Dataset {
  Matrix features;  // n x d_obs
  std::vector<SampleMeta> meta;
  std::string provenance;

  int n_samples() const { return static_cast<int>(meta.size()); }
  int dim() const { return features.cols(); }
  std::vector<int> indices_of(Split s) const;
};

// Deterministic under config.seed. Splits: per identity, one seeded outfit
// is reserved for the gallery and a different one for the query set; the
// remaining outfits train. Cameras are assigned round-robin in generation
// order. Throws ConfigError on impossible configs (outfits_per_id < 2, ...).
Dataset generate(const SynthConfig& config);

// Per identity, keeps ceil(keep_fraction * train outfits) train outfits
// (minimum one), chosen by seeded draw; samples of dropped outfits leave
// the train split. Query/gallery rows are never touched.
Dataset drop_outfits(const Dataset& ds, double keep_fraction, std::uint64_t seed);

// CSV with header sample_id,person_id,clothes_id,camera_id,split,f0,... and
// features rendered at 17 significant digits (round-trips doubles exactly),
// LF line endings. load_dataset reports malformed input with line numbers.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace divnorm
