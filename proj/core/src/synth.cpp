#include "divnorm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "divnorm/errors.hpp"
#include "divnorm/rng.hpp"

namespace divnorm {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  throw ContractViolation("split_name: bad enum value");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "query") return Split::query;
  if (name == "gallery") return Split::gallery;
  throw ParseError("unknown split value '" + name + "' (expected train|query|gallery)");
}

std::vector<int> Dataset::indices_of(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < n_samples(); ++i) {
    if (meta[i].split == s) out.push_back(i);
  }
  return out;
}

namespace {

void validate(const SynthConfig& c) {
  if (c.n_ids < 1) throw ConfigError("synth: n_ids must be >= 1");
  if (c.outfits_per_id < 2) {
    throw ConfigError("synth: outfits_per_id must be >= 2 so query and gallery outfits exist");
  }
  if (c.samples_per_outfit < 1) throw ConfigError("synth: samples_per_outfit must be >= 1");
  if (c.n_cameras < 1) throw ConfigError("synth: n_cameras must be >= 1");
  if (c.d_id < 1 || c.d_c < 1) throw ConfigError("synth: latent dimensions must be >= 1");
  if (c.d_obs < c.d_id + c.d_c) throw ConfigError("synth: d_obs must be >= d_id + d_c");
  if (c.noise_std < 0.0) throw ConfigError("synth: noise_std must be >= 0");
  for (double r : {c.id_occlusion_rate, c.clothes_occlusion_rate}) {
    if (r < 0.0 || r > 1.0) throw ConfigError("synth: occlusion rates must be in [0, 1]");
  }
}

}  // namespace

Dataset generate(const SynthConfig& config) {
  validate(config);
  SeededRng rng(config.seed);
  const int d_lat = config.d_id + config.d_c;

  Matrix mix(config.d_obs, d_lat);
  if (config.identity_mixing) {
    for (int i = 0; i < d_lat; ++i) mix(i, i) = 1.0;
  } else {
    for (int i = 0; i < config.d_obs; ++i) {
      for (int j = 0; j < d_lat; ++j) {
        mix(i, j) = rng.normal() * (j >= config.d_id ? config.clothes_gain : 1.0);
      }
    }
  }

  const int total =
      config.n_ids * config.outfits_per_id * config.samples_per_outfit;
  Dataset ds;
  ds.features = Matrix(total, config.d_obs);
  ds.meta.reserve(total);
  ds.provenance = "synthetic(seed=" + std::to_string(config.seed) + ")";

  std::vector<double> latent(d_lat);
  std::int64_t sample_id = 0;
  for (int pid = 0; pid < config.n_ids; ++pid) {
    std::vector<double> z_id(config.d_id);
    for (double& v : z_id) v = rng.normal();
    const int gallery_outfit = rng.below(config.outfits_per_id);
    int query_outfit = rng.below(config.outfits_per_id - 1);
    if (query_outfit >= gallery_outfit) ++query_outfit;

    for (int outfit = 0; outfit < config.outfits_per_id; ++outfit) {
      std::vector<double> z_c(config.d_c);
      for (double& v : z_c) v = rng.normal();
      const int clothes_id = pid * config.outfits_per_id + outfit;
      const Split split = outfit == gallery_outfit ? Split::gallery
                          : outfit == query_outfit ? Split::query
                                                   : Split::train;
      for (int s = 0; s < config.samples_per_outfit; ++s) {
        const bool occlude_id = rng.uniform() < config.id_occlusion_rate;
        const bool occlude_clothes = rng.uniform() < config.clothes_occlusion_rate;
        for (int j = 0; j < config.d_id; ++j) latent[j] = occlude_id ? 0.0 : z_id[j];
        for (int j = 0; j < config.d_c; ++j) {
          latent[config.d_id + j] = occlude_clothes ? 0.0 : z_c[j];
        }
        for (int r = 0; r < config.d_obs; ++r) {
          double v = 0.0;
          for (int j = 0; j < d_lat; ++j) v += mix(r, j) * latent[j];
          ds.features(static_cast<int>(sample_id), r) = v + config.noise_std * rng.normal();
        }
        SampleMeta m;
        m.sample_id = sample_id;
        m.person_id = pid;
        m.clothes_id = clothes_id;
        m.camera_id = static_cast<int>(sample_id % config.n_cameras);
        m.split = split;
        ds.meta.push_back(m);
        ++sample_id;
      }
    }
  }
  return ds;
}

Dataset drop_outfits(const Dataset& ds, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw ContractViolation("drop_outfits: keep_fraction must be in (0, 1]");
  }
  // Distinct train outfits per identity, in sorted order for determinism.
  std::map<int, std::vector<int>> train_outfits;
  for (const SampleMeta& m : ds.meta) {
    if (m.split != Split::train) continue;
    auto& v = train_outfits[m.person_id];
    if (std::find(v.begin(), v.end(), m.clothes_id) == v.end()) v.push_back(m.clothes_id);
  }

  SeededRng rng(seed);
  std::set<int> retained;
  for (auto& [pid, outfits] : train_outfits) {
    std::sort(outfits.begin(), outfits.end());
    const int count = static_cast<int>(outfits.size());
    // Tolerance-adjusted ceil so 0.2 * 5 counts as 1, not 2.
    int keep = static_cast<int>(std::ceil(keep_fraction * count - 1e-9));
    keep = std::clamp(keep, 1, count);
    rng.shuffle(outfits);
    retained.insert(outfits.begin(), outfits.begin() + keep);
  }

  std::vector<int> kept_rows;
  for (int i = 0; i < ds.n_samples(); ++i) {
    const SampleMeta& m = ds.meta[i];
    if (m.split == Split::train && retained.find(m.clothes_id) == retained.end()) continue;
    kept_rows.push_back(i);
  }

  Dataset out;
  out.provenance = ds.provenance;
  out.features = Matrix(static_cast<int>(kept_rows.size()), ds.dim());
  out.meta.reserve(kept_rows.size());
  for (size_t r = 0; r < kept_rows.size(); ++r) {
    for (int c = 0; c < ds.dim(); ++c) {
      out.features(static_cast<int>(r), c) = ds.features(kept_rows[r], c);
    }
    out.meta.push_back(ds.meta[kept_rows[r]]);
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_dataset: cannot open '" + path + "' for writing");
  out << "sample_id,person_id,clothes_id,camera_id,split";
  for (int j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << "\n";
  char buf[64];
  for (int i = 0; i < ds.n_samples(); ++i) {
    const SampleMeta& m = ds.meta[i];
    out << m.sample_id << ',' << m.person_id << ',' << m.clothes_id << ',' << m.camera_id
        << ',' << split_name(m.split);
    for (int j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("save_dataset: write failed for '" + path + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

long long parse_int(const std::string& s, const char* what, int line_no) {
  size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(std::string("non-integer ") + what + " '" + s + "'", line_no);
  }
  if (pos != s.size()) {
    throw ParseError(std::string("non-integer ") + what + " '" + s + "'", line_no);
  }
  return v;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset file '" + path + "'", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> expected = {"sample_id", "person_id", "clothes_id",
                                             "camera_id", "split"};
  for (size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size()) {
      throw ParseError("dataset header missing column '" + expected[i] + "'", 1);
    }
    if (header[i] != expected[i]) {
      throw ParseError("dataset header column " + std::to_string(i + 1) + " is '" + header[i] +
                           "', expected '" + expected[i] + "'",
                       1);
    }
  }
  if (header.size() < expected.size() + 1) {
    throw ParseError("dataset header has no feature columns", 1);
  }
  const int dim = static_cast<int>(header.size() - expected.size());
  for (int j = 0; j < dim; ++j) {
    const std::string want = "f" + std::to_string(j);
    if (header[expected.size() + j] != want) {
      throw ParseError("dataset header feature column is '" + header[expected.size() + j] +
                           "', expected '" + want + "'",
                       1);
    }
  }

  std::vector<SampleMeta> meta;
  std::vector<double> values;
  std::set<std::int64_t> seen_ids;
  std::map<int, int> clothes_to_person;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (static_cast<int>(f.size()) != static_cast<int>(expected.size()) + dim) {
      throw ParseError("row has " + std::to_string(f.size()) + " columns, expected " +
                           std::to_string(expected.size() + dim),
                       line_no);
    }
    SampleMeta m;
    m.sample_id = parse_int(f[0], "sample_id", line_no);
    m.person_id = static_cast<int>(parse_int(f[1], "person_id", line_no));
    m.clothes_id = static_cast<int>(parse_int(f[2], "clothes_id", line_no));
    m.camera_id = static_cast<int>(parse_int(f[3], "camera_id", line_no));
    if (m.camera_id < 0) throw ParseError("camera_id must be >= 0", line_no);
    try {
      m.split = split_from_name(f[4]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!seen_ids.insert(m.sample_id).second) {
      throw ParseError("duplicate sample_id " + std::to_string(m.sample_id), line_no);
    }
    const auto [it, inserted] = clothes_to_person.emplace(m.clothes_id, m.person_id);
    if (!inserted && it->second != m.person_id) {
      throw ParseError("clothes_id " + std::to_string(m.clothes_id) +
                           " appears under two person_ids",
                       line_no);
    }
    for (int j = 0; j < dim; ++j) {
      const std::string& s = f[expected.size() + j];
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric feature f" + std::to_string(j) + " value '" + s + "'",
                         line_no);
      }
      values.push_back(v);
    }
    meta.push_back(m);
  }
  if (meta.empty()) throw ParseError("dataset '" + path + "' has no rows", line_no);

  Dataset ds;
  ds.provenance = "ingested(" + path + ")";
  ds.meta = std::move(meta);
  ds.features = Matrix(static_cast<int>(ds.meta.size()), dim);
  for (int i = 0; i < ds.n_samples(); ++i) {
    for (int j = 0; j < dim; ++j) {
      ds.features(i, j) = values[static_cast<size_t>(i) * dim + j];
    }
  }
  return ds;
}

}  // namespace divnorm
