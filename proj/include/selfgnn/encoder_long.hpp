#pragma once

#include <cstdint>
#include <vector>

#include "selfgnn/autograd.hpp"
#include "selfgnn/data.hpp"
#include "selfgnn/nn.hpp"

namespace selfgnn {

// Interval-level encoder: GRU over an entity's T short-term embeddings,
// multi-head self-attention over the hidden sequence (no mask), then the T
// attention outputs are summed into one long-term embedding per entity.
struct IntervalEncoderVars {
  GruVars gru;
  AttentionVars att;
};

Var interval_sequence_encode(Tape& tape, const std::vector<Var>& period_embeddings,
                             const IntervalEncoderVars& p, std::size_t heads);

// Instance-level encoder over the chronological item sequences of the given
// users. Sequences shorter than M are left-padded; padding is excluded from
// attention and from the final sum. Users with empty sequences yield zero
// rows (counted in empty_users).
struct InstanceEncodeResult {
  Var user_embeddings;  // [users.size() x d]
  std::size_t empty_users = 0;
};

InstanceEncodeResult instance_sequence_encode(Tape& tape,
                                              const std::vector<InstanceSequence>& all_sequences,
                                              const std::vector<std::int32_t>& users,
                                              Var item_long, Var positional,
                                              const std::vector<AttentionVars>& layers,
                                              std::size_t heads, double leaky_slope,
                                              std::size_t max_seq);

// Multi-view aggregation: elementwise sum of interval-level and
// instance-level user features.
Var aggregate_views(Tape& tape, Var interval_user, Var instance_user);

}  // namespace selfgnn
