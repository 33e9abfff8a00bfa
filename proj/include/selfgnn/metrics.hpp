#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace selfgnn {

// Ranked candidate list for one test user: one positive plus sampled
// negatives, ranked by descending score with ties broken by ascending item
// id so evaluation is deterministic.
struct RankedList {
  std::int32_t user = 0;
  std::int32_t positive_item = 0;
  std::size_t rank = 0;  // 1-based rank of the positive
};

// rank = 1 + |{j : s_j > s_pos}| + |{j : s_j == s_pos and item_j < pos}|
inline std::size_t rank_of_positive(const std::vector<double>& negative_scores,
                                    const std::vector<std::int32_t>& negative_items,
                                    double positive_score, std::int32_t positive_item) {
  if (negative_scores.size() != negative_items.size()) {
    throw std::invalid_argument("rank_of_positive: score/item lists differ");
  }
  std::size_t rank = 1;
  for (std::size_t i = 0; i < negative_scores.size(); ++i) {
    if (negative_scores[i] > positive_score ||
        (negative_scores[i] == positive_score && negative_items[i] < positive_item)) {
      ++rank;
    }
  }
  return rank;
}

inline double hr_at_n(std::size_t rank, std::size_t n) {
  if (n < 1) throw std::invalid_argument("hr_at_n: n must be >= 1");
  if (rank < 1) throw std::invalid_argument("hr_at_n: rank must be >= 1");
  return rank <= n ? 1.0 : 0.0;
}

// Single relevant item, ideal DCG = 1: NDCG = 1/log2(rank+1) inside top n.
inline double ndcg_at_n(std::size_t rank, std::size_t n) {
  if (n < 1) throw std::invalid_argument("ndcg_at_n: n must be >= 1");
  if (rank < 1) throw std::invalid_argument("ndcg_at_n: rank must be >= 1");
  if (rank > n) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

}  // namespace selfgnn
