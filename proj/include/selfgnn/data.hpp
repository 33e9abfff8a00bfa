#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selfgnn/rng.hpp"
#include "selfgnn/tensor.hpp"

namespace selfgnn {

struct Interaction {
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::int64_t timestamp = 0;
};

// Timestamped implicit-feedback events with dense ids. Ids are assigned by
// first appearance in the source file; records are kept sorted by
// (user, timestamp) with source order preserved for equal timestamps.
struct InteractionLog {
  std::vector<Interaction> records;
  std::int32_t user_count = 0;
  std::int32_t item_count = 0;
  // original keys, indexed by dense id
  std::vector<std::string> user_keys;
  std::vector<std::string> item_keys;

  std::size_t size() const { return records.size(); }
};

// Bipartite user-item adjacency restricted to one time slice. Edge values
// are exactly 1.0; the final interval is closed on the right.
struct IntervalGraph {
  std::size_t period = 0;
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  SparseMatrix adjacency;  // user_count x item_count
};

struct HeldOut {
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::int64_t timestamp = 0;
};

struct SplitDataset {
  InteractionLog train;
  std::vector<HeldOut> validation;  // one per eligible user, indexed arbitrarily
  std::vector<HeldOut> test;
  std::vector<std::int32_t> test_users;                // sampled subset
  std::vector<std::vector<std::int32_t>> negatives;    // parallel to test_users
  std::vector<std::int32_t> negative_shortfall_users;  // users given < requested negatives
  // full interaction sets per user (train+val+test), ascending item ids
  std::vector<std::vector<std::int32_t>> user_items;

  std::optional<HeldOut> validation_for(std::int32_t user) const;
  std::optional<HeldOut> test_for(std::int32_t user) const;
};

struct InstanceSequence {
  std::int32_t user = 0;
  std::vector<std::int32_t> item_ids;  // chronological, at most M (most recent kept)
  std::size_t valid_length = 0;
};

// CSV ingestion: header `user,item,timestamp[,rating]`, one interaction per
// row. Duplicate (user,item,timestamp) rows collapse to one record.
InteractionLog load_interactions(const std::string& path);
InteractionLog parse_interactions(const std::string& text, const std::string& origin);

// Canonical re-export: rows sorted by (user, timestamp, item key); loading
// the exported file reproduces identical dense id assignments.
std::string export_interactions(const InteractionLog& log);
void write_interactions(const InteractionLog& log, const std::string& path);

// Iteratively drop users/items with fewer than k interactions until stable,
// then re-densify ids. Throws if nothing survives.
InteractionLog core_filter(const InteractionLog& log, int k);

// Equal-width partition of [t_b, t_e] into T intervals; every training
// interaction lands in exactly one, duplicates within an interval collapse.
std::vector<IntervalGraph> partition_intervals(const InteractionLog& train, std::size_t T);

// Leave-last-two split: last interaction -> test, penultimate -> validation,
// for users with >= 3 interactions; everything else stays in train.
SplitDataset split_leave_two(const InteractionLog& log, std::size_t test_user_cap,
                             std::uint64_t seed, std::size_t num_negatives = 999);

std::vector<InstanceSequence> build_instance_sequences(const InteractionLog& train, std::size_t M);

// n items uniform over the user's non-interacted set; without replacement
// within one call when feasible.
std::vector<std::int32_t> sample_negatives(const SplitDataset& split, std::int32_t user,
                                           std::size_t n, Rng& rng);

struct EdgePair {
  std::int32_t u = 0, v = 0;    // first edge (batch-incident)
  std::int32_t u2 = 0, v2 = 0;  // second edge (anywhere in the period graph)
};

enum class SslScope { Batch, PerUser };

// Per period: n_sal pairs of observed edges. First edge uniform over edges
// incident to batch_users (Batch scope) or per batch user (PerUser scope);
// second edge uniform over all edges of the period graph. Periods with no
// batch-incident edges contribute zero pairs.
std::vector<std::vector<EdgePair>> sample_ssl_edge_pairs(const std::vector<IntervalGraph>& graphs,
                                                         const std::vector<std::int32_t>& batch_users,
                                                         std::size_t n_sal, Rng& rng,
                                                         SslScope scope = SslScope::Batch);

// Two-cluster synthetic log used by the robustness and memorization
// harnesses: users belong to one of two item pools; optional mid-stream
// cluster migration gives the interval graphs real temporal structure.
struct SyntheticSpec {
  std::int32_t users = 20;
  std::int32_t items = 30;
  std::size_t events_per_user = 18;
  double migrating_fraction = 0.5;  // users whose pool switches halfway
  double cross_noise = 0.0;         // probability of an off-pool pick at generation time
  std::int64_t horizon = 1'000'000;
};

InteractionLog make_two_cluster_log(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace selfgnn
