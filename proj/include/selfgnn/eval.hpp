#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selfgnn/data.hpp"
#include "selfgnn/metrics.hpp"
#include "selfgnn/training.hpp"

namespace selfgnn {

struct CohortReport {
  std::string label;
  std::size_t count = 0;
  double hr10 = 0.0, ndcg10 = 0.0, hr20 = 0.0, ndcg20 = 0.0;
};

struct EvalReport {
  std::string variant = "full";
  double noise_ratio = 0.0;
  double hr10 = 0.0, ndcg10 = 0.0, hr20 = 0.0, ndcg20 = 0.0;
  std::size_t evaluated_users = 0;
  std::vector<CohortReport> cohorts;
  std::vector<RankedList> ranks;  // per evaluated test user
};

std::string report_to_json(const EvalReport& report);

// Everything a training or evaluation run needs, derived deterministically
// from (log, hp, test_user_cap).
struct PreparedData {
  SplitDataset split;
  std::vector<IntervalGraph> graphs;
  std::vector<InstanceSequence> sequences;
};

PreparedData prepare_data(const InteractionLog& log, const HyperParams& hp,
                          std::size_t test_user_cap = 10000);

// Scores each sampled test user's held-out item against the user's fixed
// negatives in inference mode and averages HR/NDCG at 10 and 20.
EvalReport evaluate_protocol(const ModelParams& params, const PreparedData& data);

// Same aggregation over externally supplied score rows (one row of all-item
// scores per sampled test user, aligned with split.test_users).
EvalReport evaluate_scored(const SplitDataset& split,
                           const std::vector<std::vector<double>>& scores);

double cosine_rows(const Tensor& m, std::size_t a, std::size_t b);

// Replaces floor(ratio * |train|) uniformly chosen training interactions'
// items with uniform random different items, keeping user and timestamp.
// Validation/test and the fixed negatives are untouched.
struct NoiseInjection {
  InteractionLog corrupted;
  std::vector<std::size_t> replaced_indices;  // into corrupted.records
  std::vector<Interaction> planted;           // the records after replacement
};

NoiseInjection inject_noise(const InteractionLog& train, double ratio, Rng& rng);

// Swaps the training log inside a prepared bundle for a corrupted one and
// rebuilds graphs and sequences; split/negatives stay fixed.
PreparedData with_corrupted_train(const PreparedData& clean, const InteractionLog& corrupted,
                                  const HyperParams& hp);

// Half-open buckets over training-interaction counts, e.g. boundaries
// {15, 25} -> "0-15", "15-25", "25+". A count equal to a boundary falls in
// the bucket starting at that boundary.
std::vector<std::string> cohort_labels(const std::vector<std::size_t>& boundaries);
std::size_t cohort_of(std::size_t interaction_count, const std::vector<std::size_t>& boundaries);
EvalReport with_sparsity_cohorts(EvalReport report, const PreparedData& data,
                                 const std::vector<std::size_t>& boundaries);

// Table-style module ablations.
enum class Variant { Full, NoSal, NoUw, NoStg, NoAtl, NoGat, NoCf };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
// Applies a variant to (hp, ablation); NoStg rewrites hp.periods to 1.
void apply_variant(Variant v, HyperParams& hp, AblationFlags& ablation);

struct AblationRun {
  EvalReport report;
  TrainResult training;
  PreparedData data;
};

AblationRun run_ablation(Variant variant, const InteractionLog& log, HyperParams hp,
                         std::size_t test_user_cap = 10000);

// Case-study statistics over planted noise edges: the mean short-term
// likelihood of the planted edges, and the mean cosine similarity between
// each planted item's long-term embedding and the other items in its user's
// sequence. Throws when no planted edge is usable.
struct NoiseEdgeStats {
  double mean_short_likelihood = 0.0;
  double mean_cosine_to_peers = 0.0;
  std::size_t flagged_edges = 0;
};

NoiseEdgeStats sal_case_statistics(const ModelParams& params, const PreparedData& data,
                                   const std::vector<Interaction>& planted);

}  // namespace selfgnn
