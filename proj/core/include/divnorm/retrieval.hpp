#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "divnorm/matrix.hpp"
#include "divnorm/synth.hpp"

namespace divnorm {

class DiverseNormModel;

enum class Protocol { general, sc, cc };
enum class Strategy { sim_sum, feat_sum };

std::string protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& s);
std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& s);

// Per-sample branch embeddings of one split, as produced by the frozen
// model (no re-normalization, so feat_sum can exhibit the magnitude
// domination the per-branch cosine avoids).
struct BranchFeatureStore {
  Matrix h_id;
  Matrix h_c;
  std::vector<SampleMeta> meta;

  int size() const { return static_cast<int>(meta.size()); }
};

BranchFeatureStore build_store(DiverseNormModel& model, const Dataset& ds, Split split);

enum class PairLabel { valid_match, valid_nonmatch, excluded };

// Query/gallery pair filtering:
//   general: excluded iff same person AND same camera
//   cc:      excluded iff same person AND (same camera OR same clothes)
//   sc:      excluded iff same person AND (same camera OR different clothes)
// Among non-excluded pairs, a match is same person.
PairLabel protocol_mask(const SampleMeta& q, const SampleMeta& g, Protocol protocol);

// sim_sum  = (cos(q_id, g_id) + cos(q_c, g_c)) / 2
// feat_sum = cos(q_id + q_c, g_id + g_c)
// A zero-norm vector makes its cosine term 0; occurrences are counted in
// *zero_norm_terms when provided.
double branch_similarity(const BranchFeatureStore& qs, int qi, const BranchFeatureStore& gs,
                         int gi, Strategy strategy, std::int64_t* zero_norm_terms = nullptr);

// One query's masked gallery scoring, ready for ranking.
struct QueryScores {
  std::int64_t query_sample_id = 0;
  std::vector<double> scores;
  std::vector<char> is_match;
  std::vector<std::int64_t> gallery_ids;  // tie-break key, ascending
};

struct QueryResult {
  std::int64_t query_sample_id = 0;
  double ap = 0.0;
  int first_match_rank = 0;  // 1-based
};

struct RankMetricsResult {
  std::vector<QueryResult> per_query;  // evaluated queries, in input order
  std::vector<double> cmc;             // cmc[k-1] = fraction with first match rank <= k
  int n_evaluated = 0;
  int n_skipped = 0;  // queries with no valid match after masking
};

// AP_q = (1/R_q) * sum over hits of precision@rank(hit); ranking sorts by
// score descending with ties broken by gallery sample_id ascending.
RankMetricsResult rank_metrics(const std::vector<QueryScores>& queries, int cmc_length);

struct EvalReport {
  Protocol protocol = Protocol::general;
  Strategy strategy = Strategy::sim_sum;
  double map = 0.0;
  std::vector<double> cmc;
  int n_queries_evaluated = 0;
  int n_queries_skipped = 0;
  std::int64_t zero_norm_terms = 0;
  std::vector<QueryResult> per_query;
};

// Scores every (query, gallery) pair under the protocol mask and reduces to
// mAP and the CMC curve. Deterministic for a fixed store.
EvalReport evaluate(const BranchFeatureStore& queries, const BranchFeatureStore& gallery,
                    Protocol protocol, Strategy strategy);

// protocol,strategy,mAP,rank1,rank5,rank10,n_queries
void write_report_csv(const std::vector<EvalReport>& reports, const std::string& path);
// query_sample_id,AP,first_match_rank
void write_per_query_csv(const EvalReport& report, const std::string& path);

}  // namespace divnorm
