#include "divnorm/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "divnorm/diverse_norm.hpp"
#include "divnorm/errors.hpp"

namespace divnorm {

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::general: return "general";
    case Protocol::sc: return "sc";
    case Protocol::cc: return "cc";
  }
  throw ContractViolation("protocol_name: bad enum value");
}

Protocol protocol_from_name(const std::string& s) {
  if (s == "general") return Protocol::general;
  if (s == "sc") return Protocol::sc;
  if (s == "cc") return Protocol::cc;
  throw ConfigError("unknown protocol '" + s + "' (expected general|sc|cc)");
}

std::string strategy_name(Strategy s) {
  return s == Strategy::sim_sum ? "sim_sum" : "feat_sum";
}

Strategy strategy_from_name(const std::string& s) {
  if (s == "sim_sum") return Strategy::sim_sum;
  if (s == "feat_sum") return Strategy::feat_sum;
  throw ConfigError("unknown strategy '" + s + "' (expected sim_sum|feat_sum)");
}

BranchFeatureStore build_store(DiverseNormModel& model, const Dataset& ds, Split split) {
  const std::vector<int> idx = ds.indices_of(split);
  if (idx.empty()) {
    throw ConfigError("build_store: dataset has no '" + split_name(split) + "' samples");
  }
  Matrix x(static_cast<int>(idx.size()), ds.dim());
  BranchFeatureStore store;
  store.meta.reserve(idx.size());
  for (size_t r = 0; r < idx.size(); ++r) {
    for (int c = 0; c < ds.dim(); ++c) x(static_cast<int>(r), c) = ds.features(idx[r], c);
    store.meta.push_back(ds.meta[idx[r]]);
  }
  BranchEmbeddings emb = model.embed_eval(x);
  if (!emb.h_id.all_finite() || !emb.h_c.all_finite()) {
    throw InvalidInputError("build_store: non-finite embeddings");
  }
  store.h_id = std::move(emb.h_id);
  store.h_c = std::move(emb.h_c);
  return store;
}

PairLabel protocol_mask(const SampleMeta& q, const SampleMeta& g, Protocol protocol) {
  const bool same_person = q.person_id == g.person_id;
  const bool same_camera = q.camera_id == g.camera_id;
  const bool same_clothes = q.clothes_id == g.clothes_id;
  bool excluded = false;
  switch (protocol) {
    case Protocol::general: excluded = same_person && same_camera; break;
    case Protocol::cc: excluded = same_person && (same_camera || same_clothes); break;
    case Protocol::sc: excluded = same_person && (same_camera || !same_clothes); break;
  }
  if (excluded) return PairLabel::excluded;
  return same_person ? PairLabel::valid_match : PairLabel::valid_nonmatch;
}

namespace {

// Cosine with the zero-norm convention: an all-zero vector contributes 0.
double cosine(const double* a, const double* b, int d, std::int64_t* zero_norm_terms) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < d; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm_terms) ++*zero_norm_terms;
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double branch_similarity(const BranchFeatureStore& qs, int qi, const BranchFeatureStore& gs,
                         int gi, Strategy strategy, std::int64_t* zero_norm_terms) {
  const int d = qs.h_id.cols();
  if (strategy == Strategy::sim_sum) {
    const double s_id = cosine(qs.h_id.row_ptr(qi), gs.h_id.row_ptr(gi), d, zero_norm_terms);
    const double s_c = cosine(qs.h_c.row_ptr(qi), gs.h_c.row_ptr(gi), d, zero_norm_terms);
    return 0.5 * (s_id + s_c);
  }
  std::vector<double> q(d), g(d);
  for (int i = 0; i < d; ++i) {
    q[i] = qs.h_id(qi, i) + qs.h_c(qi, i);
    g[i] = gs.h_id(gi, i) + gs.h_c(gi, i);
  }
  return cosine(q.data(), g.data(), d, zero_norm_terms);
}

RankMetricsResult rank_metrics(const std::vector<QueryScores>& queries, int cmc_length) {
  if (cmc_length < 1) throw ContractViolation("rank_metrics: cmc_length must be >= 1");
  RankMetricsResult out;
  out.cmc.assign(cmc_length, 0.0);
  for (const QueryScores& q : queries) {
    const size_t n = q.scores.size();
    if (q.is_match.size() != n || q.gallery_ids.size() != n) {
      throw ContractViolation("rank_metrics: ragged query arrays");
    }
    int relevant = 0;
    for (char f : q.is_match) relevant += f ? 1 : 0;
    if (relevant == 0) {
      ++out.n_skipped;
      continue;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (q.scores[a] != q.scores[b]) return q.scores[a] > q.scores[b];
      return q.gallery_ids[a] < q.gallery_ids[b];
    });

    QueryResult res;
    res.query_sample_id = q.query_sample_id;
    int hits = 0;
    double ap = 0.0;
    for (size_t rank = 1; rank <= n; ++rank) {
      if (q.is_match[order[rank - 1]]) {
        if (hits == 0) res.first_match_rank = static_cast<int>(rank);
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank);
      }
    }
    res.ap = ap / relevant;
    for (int k = res.first_match_rank; k <= cmc_length; ++k) out.cmc[k - 1] += 1.0;
    out.per_query.push_back(res);
    ++out.n_evaluated;
  }
  if (out.n_evaluated > 0) {
    for (double& v : out.cmc) v /= out.n_evaluated;
  }
  return out;
}

EvalReport evaluate(const BranchFeatureStore& queries, const BranchFeatureStore& gallery,
                    Protocol protocol, Strategy strategy) {
  if (queries.size() == 0 || gallery.size() == 0) {
    throw ConfigError("evaluate: empty query or gallery store");
  }
  EvalReport report;
  report.protocol = protocol;
  report.strategy = strategy;

  std::vector<QueryScores> scored;
  scored.reserve(queries.size());
  for (int qi = 0; qi < queries.size(); ++qi) {
    QueryScores qs;
    qs.query_sample_id = queries.meta[qi].sample_id;
    qs.scores.reserve(gallery.size());
    for (int gi = 0; gi < gallery.size(); ++gi) {
      const PairLabel label = protocol_mask(queries.meta[qi], gallery.meta[gi], protocol);
      if (label == PairLabel::excluded) continue;
      qs.scores.push_back(
          branch_similarity(queries, qi, gallery, gi, strategy, &report.zero_norm_terms));
      qs.is_match.push_back(label == PairLabel::valid_match ? 1 : 0);
      qs.gallery_ids.push_back(gallery.meta[gi].sample_id);
    }
    scored.push_back(std::move(qs));
  }

  RankMetricsResult rm = rank_metrics(scored, gallery.size());
  report.cmc = std::move(rm.cmc);
  report.n_queries_evaluated = rm.n_evaluated;
  report.n_queries_skipped = rm.n_skipped;
  report.per_query = std::move(rm.per_query);
  double sum_ap = 0.0;
  for (const QueryResult& r : report.per_query) sum_ap += r.ap;
  report.map = report.n_queries_evaluated > 0 ? sum_ap / report.n_queries_evaluated : 0.0;
  return report;
}

namespace {

double cmc_at(const EvalReport& r, int k) {
  if (r.cmc.empty()) return 0.0;
  const int idx = std::min(k, static_cast<int>(r.cmc.size())) - 1;
  return r.cmc[idx];
}

}  // namespace

void write_report_csv(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_report_csv: cannot open '" + path + "'");
  out << "protocol,strategy,mAP,rank1,rank5,rank10,n_queries\n";
  char buf[200];
  for (const EvalReport& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f,%d\n",
                  protocol_name(r.protocol).c_str(), strategy_name(r.strategy).c_str(), r.map,
                  cmc_at(r, 1), cmc_at(r, 5), cmc_at(r, 10), r.n_queries_evaluated);
    out << buf;
  }
  if (!out) throw IoError("write_report_csv: write failed for '" + path + "'");
}

void write_per_query_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_per_query_csv: cannot open '" + path + "'");
  out << "query_sample_id,AP,first_match_rank\n";
  char buf[100];
  for (const QueryResult& q : report.per_query) {
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%d\n", static_cast<long long>(q.query_sample_id),
                  q.ap, q.first_match_rank);
    out << buf;
  }
  if (!out) throw IoError("write_per_query_csv: write failed for '" + path + "'");
}

}  // namespace divnorm
