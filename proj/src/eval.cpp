#include "selfgnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <stdexcept>
#include <unordered_set>

namespace selfgnn {

using nlohmann::json;

std::string report_to_json(const EvalReport& report) {
  json j;
  j["variant"] = report.variant;
  j["noise_ratio"] = report.noise_ratio;
  j["metrics"] = json{{"hr10", report.hr10},
                      {"ndcg10", report.ndcg10},
                      {"hr20", report.hr20},
                      {"ndcg20", report.ndcg20}};
  j["evaluated_users"] = report.evaluated_users;
  json cohorts = json::array();
  for (const auto& c : report.cohorts) {
    cohorts.push_back(json{{"label", c.label},
                           {"count", c.count},
                           {"metrics", json{{"hr10", c.hr10},
                                            {"ndcg10", c.ndcg10},
                                            {"hr20", c.hr20},
                                            {"ndcg20", c.ndcg20}}}});
  }
  j["cohorts"] = std::move(cohorts);
  return j.dump(2);
}

PreparedData prepare_data(const InteractionLog& log, const HyperParams& hp,
                          std::size_t test_user_cap) {
  PreparedData data;
  data.split = split_leave_two(log, test_user_cap, hp.seed);
  data.graphs = partition_intervals(data.split.train, hp.periods);
  data.sequences = build_instance_sequences(data.split.train, hp.max_seq);
  return data;
}

EvalReport evaluate_protocol(const ModelParams& params, const PreparedData& data) {
  if (data.split.test_users.empty()) return {};
  return evaluate_scored(data.split,
                         score_users(params, data.graphs, data.sequences, data.split.test_users));
}

EvalReport evaluate_scored(const SplitDataset& split,
                           const std::vector<std::vector<double>>& scores) {
  EvalReport report;
  if (scores.size() != split.test_users.size()) {
    throw std::invalid_argument("evaluate_scored: one score row per sampled test user required");
  }
  for (std::size_t k = 0; k < split.test_users.size(); ++k) {
    const std::int32_t u = split.test_users[k];
    const auto held = split.test_for(u);
    if (!held) continue;
    const auto& row = scores[k];
    const auto& negs = split.negatives[k];
    std::vector<double> neg_scores;
    neg_scores.reserve(negs.size());
    for (auto j : negs) neg_scores.push_back(row[static_cast<std::size_t>(j)]);
    const std::size_t rank =
        rank_of_positive(neg_scores, negs, row[static_cast<std::size_t>(held->item)], held->item);
    report.ranks.push_back({u, held->item, rank});
    report.hr10 += hr_at_n(rank, 10);
    report.ndcg10 += ndcg_at_n(rank, 10);
    report.hr20 += hr_at_n(rank, 20);
    report.ndcg20 += ndcg_at_n(rank, 20);
  }
  report.evaluated_users = report.ranks.size();
  if (report.evaluated_users > 0) {
    const auto n = static_cast<double>(report.evaluated_users);
    report.hr10 /= n;
    report.ndcg10 /= n;
    report.hr20 /= n;
    report.ndcg20 /= n;
  }
  return report;
}

NoiseInjection inject_noise(const InteractionLog& train, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0) throw std::invalid_argument("inject_noise: ratio must be in [0,1)");
  NoiseInjection out;
  out.corrupted = train;
  const std::size_t n = train.records.size();
  const auto replace = static_cast<std::size_t>(ratio * static_cast<double>(n));
  if (replace == 0) return out;
  if (train.item_count < 2) throw std::invalid_argument("inject_noise: need at least two items");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  // partial Fisher-Yates: the first `replace` entries are a uniform subset
  for (std::size_t k = 0; k < replace; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(n - k));
    std::swap(idx[k], idx[j]);
  }
  idx.resize(replace);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) {
    auto& rec = out.corrupted.records[i];
    std::int32_t substitute = rec.item;
    while (substitute == rec.item) {
      substitute = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(train.item_count)));
    }
    rec.item = substitute;
    out.replaced_indices.push_back(i);
    out.planted.push_back(rec);
  }
  return out;
}

PreparedData with_corrupted_train(const PreparedData& clean, const InteractionLog& corrupted,
                                  const HyperParams& hp) {
  PreparedData data;
  data.split = clean.split;
  data.split.train = corrupted;
  data.graphs = partition_intervals(corrupted, hp.periods);
  data.sequences = build_instance_sequences(corrupted, hp.max_seq);
  return data;
}

std::vector<std::string> cohort_labels(const std::vector<std::size_t>& boundaries) {
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (boundaries[i] <= boundaries[i - 1]) {
      throw std::invalid_argument("cohort boundaries must be strictly increasing");
    }
  }
  if (!boundaries.empty() && boundaries[0] == 0) {
    throw std::invalid_argument("cohort boundaries must start above 0");
  }
  std::vector<std::string> labels;
  std::size_t lo = 0;
  for (std::size_t b : boundaries) {
    labels.push_back(std::to_string(lo) + "-" + std::to_string(b));
    lo = b;
  }
  labels.push_back(std::to_string(lo) + "+");
  return labels;
}

std::size_t cohort_of(std::size_t interaction_count, const std::vector<std::size_t>& boundaries) {
  std::size_t c = 0;
  for (std::size_t b : boundaries) {
    if (interaction_count < b) return c;
    ++c;
  }
  return c;
}

EvalReport with_sparsity_cohorts(EvalReport report, const PreparedData& data,
                                 const std::vector<std::size_t>& boundaries) {
  const auto labels = cohort_labels(boundaries);
  std::vector<CohortReport> cohorts(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) cohorts[i].label = labels[i];

  std::vector<std::size_t> train_counts(static_cast<std::size_t>(data.split.train.user_count), 0);
  for (const auto& r : data.split.train.records) {
    ++train_counts[static_cast<std::size_t>(r.user)];
  }
  for (const auto& rl : report.ranks) {
    const std::size_t c = cohort_of(train_counts[static_cast<std::size_t>(rl.user)], boundaries);
    auto& co = cohorts[c];
    ++co.count;
    co.hr10 += hr_at_n(rl.rank, 10);
    co.ndcg10 += ndcg_at_n(rl.rank, 10);
    co.hr20 += hr_at_n(rl.rank, 20);
    co.ndcg20 += ndcg_at_n(rl.rank, 20);
  }
  for (auto& co : cohorts) {
    if (co.count == 0) continue;
    const auto n = static_cast<double>(co.count);
    co.hr10 /= n;
    co.ndcg10 /= n;
    co.hr20 /= n;
    co.ndcg20 /= n;
  }
  report.cohorts = std::move(cohorts);
  return report;
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::Full;
  if (name == "-SAL") return Variant::NoSal;
  if (name == "-UW") return Variant::NoUw;
  if (name == "-STG") return Variant::NoStg;
  if (name == "-ATL") return Variant::NoAtl;
  if (name == "-GAT") return Variant::NoGat;
  if (name == "-CF") return Variant::NoCf;
  throw std::invalid_argument("unknown ablation variant: " + name +
                              " (expected full, -SAL, -UW, -STG, -ATL, -GAT or -CF)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoSal: return "-SAL";
    case Variant::NoUw: return "-UW";
    case Variant::NoStg: return "-STG";
    case Variant::NoAtl: return "-ATL";
    case Variant::NoGat: return "-GAT";
    case Variant::NoCf: return "-CF";
  }
  throw std::logic_error("variant_name: invalid variant");
}

void apply_variant(Variant v, HyperParams& hp, AblationFlags& ablation) {
  switch (v) {
    case Variant::Full: break;
    case Variant::NoSal: hp.lambda1 = 0.0; break;
    case Variant::NoUw: ablation.unit_weights = true; break;
    case Variant::NoStg: hp.periods = 1; break;
    case Variant::NoAtl: ablation.instance_encoder = false; break;
    case Variant::NoGat: ablation.gru_attention = false; break;
    case Variant::NoCf: ablation.graph_propagation = false; break;
  }
}

AblationRun run_ablation(Variant variant, const InteractionLog& log, HyperParams hp,
                         std::size_t test_user_cap) {
  AblationRun run;
  TrainOptions opts;
  apply_variant(variant, hp, opts.ablation);
  run.data = prepare_data(log, hp, test_user_cap);
  run.training = train(run.data.split, run.data.graphs, run.data.sequences, hp, opts);
  run.report = evaluate_protocol(params_from_checkpoint(run.training.best), run.data);
  run.report.variant = variant_name(variant);
  return run;
}

double cosine_rows(const Tensor& m, std::size_t a, std::size_t b) {
  const std::size_t d = m.cols();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    dot += m.at(a, c) * m.at(b, c);
    na += m.at(a, c) * m.at(a, c);
    nb += m.at(b, c) * m.at(b, c);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

NoiseEdgeStats sal_case_statistics(const ModelParams& params, const PreparedData& data,
                                   const std::vector<Interaction>& planted) {
  if (planted.empty()) throw std::invalid_argument("sal_case_statistics: no flagged edges");
  Tape tape;
  auto leaves = params.lift(tape);
  Rng unused(0);
  Forward fw = run_forward(tape, params, leaves, data.graphs, data.sequences, {}, Mode::Inference,
                           unused);
  const double slope = params.config().leaky_slope;
  const std::size_t d = params.config().d;

  const auto& train = data.split.train;
  std::int64_t tb = train.records.front().timestamp, te = tb;
  for (const auto& r : train.records) {
    tb = std::min(tb, r.timestamp);
    te = std::max(te, r.timestamp);
  }
  const std::size_t T = data.graphs.size();
  auto period_of = [&](std::int64_t ts) -> std::size_t {
    if (te == tb) return 0;
    const auto scaled = static_cast<__int128>(ts - tb) * static_cast<__int128>(T);
    auto idx = static_cast<std::size_t>(scaled / (te - tb));
    return idx >= T ? T - 1 : idx;
  };

  auto leaky = [slope](double x) { return x >= 0.0 ? x : slope * x; };
  auto likelihood = [&](const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += leaky(a[ra * d + c] * b[rb * d + c]);
    return acc;
  };

  const Tensor& long_item = tape.value(fw.long_item);
  NoiseEdgeStats stats;
  double cos_acc = 0.0;
  std::size_t cos_edges = 0;
  for (const auto& edge : planted) {
    const std::size_t t = period_of(edge.timestamp);
    const Tensor& eu = tape.value(fw.short_user[t]);
    const Tensor& ev = tape.value(fw.short_item[t]);
    stats.mean_short_likelihood += likelihood(eu, static_cast<std::size_t>(edge.user), ev,
                                              static_cast<std::size_t>(edge.item));
    ++stats.flagged_edges;

    const auto& seq = data.sequences[static_cast<std::size_t>(edge.user)];
    double acc = 0.0;
    std::size_t peers = 0;
    for (auto other : seq.item_ids) {
      if (other == edge.item) continue;
      acc += cosine_rows(long_item, static_cast<std::size_t>(edge.item),
                         static_cast<std::size_t>(other));
      ++peers;
    }
    if (peers > 0) {
      cos_acc += acc / static_cast<double>(peers);
      ++cos_edges;
    }
  }
  stats.mean_short_likelihood /= static_cast<double>(stats.flagged_edges);
  if (cos_edges == 0) {
    throw std::runtime_error("sal_case_statistics: no flagged edge has sequence peers");
  }
  stats.mean_cosine_to_peers = cos_acc / static_cast<double>(cos_edges);
  return stats;
}

}  // namespace selfgnn
