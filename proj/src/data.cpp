#include "selfgnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace selfgnn {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_i64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

void sort_records(std::vector<Interaction>& records) {
  std::stable_sort(records.begin(), records.end(), [](const Interaction& a, const Interaction& b) {
    return a.user != b.user ? a.user < b.user : a.timestamp < b.timestamp;
  });
}

// Re-densifies ids of the kept records in ascending old-id order.
InteractionLog reindex(const InteractionLog& log, const std::vector<Interaction>& kept) {
  std::vector<std::int32_t> user_map(static_cast<std::size_t>(log.user_count), -1);
  std::vector<std::int32_t> item_map(static_cast<std::size_t>(log.item_count), -1);
  for (const auto& r : kept) {
    user_map[static_cast<std::size_t>(r.user)] = 0;
    item_map[static_cast<std::size_t>(r.item)] = 0;
  }
  InteractionLog out;
  for (std::size_t i = 0; i < user_map.size(); ++i) {
    if (user_map[i] == 0) {
      user_map[i] = out.user_count++;
      out.user_keys.push_back(log.user_keys[i]);
    }
  }
  for (std::size_t i = 0; i < item_map.size(); ++i) {
    if (item_map[i] == 0) {
      item_map[i] = out.item_count++;
      out.item_keys.push_back(log.item_keys[i]);
    }
  }
  out.records.reserve(kept.size());
  for (const auto& r : kept) {
    out.records.push_back({user_map[static_cast<std::size_t>(r.user)],
                           item_map[static_cast<std::size_t>(r.item)], r.timestamp});
  }
  sort_records(out.records);
  return out;
}

}  // namespace

std::optional<HeldOut> SplitDataset::validation_for(std::int32_t user) const {
  auto it = std::lower_bound(validation.begin(), validation.end(), user,
                             [](const HeldOut& h, std::int32_t u) { return h.user < u; });
  if (it != validation.end() && it->user == user) return *it;
  return std::nullopt;
}

std::optional<HeldOut> SplitDataset::test_for(std::int32_t user) const {
  auto it = std::lower_bound(test.begin(), test.end(), user,
                             [](const HeldOut& h, std::int32_t u) { return h.user < u; });
  if (it != test.end() && it->user == user) return *it;
  return std::nullopt;
}

InteractionLog parse_interactions(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  struct Row {
    std::string user, item;
    std::int64_t ts;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    auto fields = split_fields(t);
    if (!header_seen) {
      if (fields.size() < 3 || lower(fields[0]) != "user" || lower(fields[1]) != "item" ||
          lower(fields[2]) != "timestamp") {
        throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                 ": expected header user,item,timestamp[,rating]");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3 && fields.size() != 4) {
      throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": expected 3 or 4 fields, got " +
                               std::to_string(fields.size()));
    }
    std::int64_t ts = 0;
    if (!parse_i64(fields[2], ts)) {
      throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": malformed timestamp '" +
                               fields[2] + "'");
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty user or item key");
    }
    rows.push_back({fields[0], fields[1], ts});
  }
  if (!header_seen) throw std::runtime_error(origin + ": empty file");
  if (rows.empty()) throw std::runtime_error(origin + ": no interaction rows");

  InteractionLog log;
  std::unordered_map<std::string, std::int32_t> users, items;
  for (const auto& r : rows) {
    auto [uit, unew] = users.try_emplace(r.user, log.user_count);
    if (unew) {
      ++log.user_count;
      log.user_keys.push_back(r.user);
    }
    auto [iit, inew] = items.try_emplace(r.item, log.item_count);
    if (inew) {
      ++log.item_count;
      log.item_keys.push_back(r.item);
    }
    log.records.push_back({uit->second, iit->second, r.ts});
  }
  sort_records(log.records);
  // collapse exact duplicates
  log.records.erase(std::unique(log.records.begin(), log.records.end(),
                                [](const Interaction& a, const Interaction& b) {
                                  return a.user == b.user && a.item == b.item &&
                                         a.timestamp == b.timestamp;
                                }),
                    log.records.end());
  return log;
}

InteractionLog load_interactions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_interactions(ss.str(), path);
}

std::string export_interactions(const InteractionLog& log) {
  std::vector<Interaction> rows = log.records;
  std::stable_sort(rows.begin(), rows.end(), [&](const Interaction& a, const Interaction& b) {
    if (a.user != b.user) return a.user < b.user;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return log.item_keys[static_cast<std::size_t>(a.item)] <
           log.item_keys[static_cast<std::size_t>(b.item)];
  });
  std::string out = "user,item,timestamp\n";
  for (const auto& r : rows) {
    out += log.user_keys[static_cast<std::size_t>(r.user)];
    out += ',';
    out += log.item_keys[static_cast<std::size_t>(r.item)];
    out += ',';
    out += std::to_string(r.timestamp);
    out += '\n';
  }
  return out;
}

void write_interactions(const InteractionLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << export_interactions(log);
}

InteractionLog core_filter(const InteractionLog& log, int k) {
  if (k < 1) throw std::invalid_argument("core_filter: k must be >= 1");
  std::vector<Interaction> kept = log.records;
  for (;;) {
    std::vector<std::size_t> udeg(static_cast<std::size_t>(log.user_count), 0);
    std::vector<std::size_t> ideg(static_cast<std::size_t>(log.item_count), 0);
    for (const auto& r : kept) {
      ++udeg[static_cast<std::size_t>(r.user)];
      ++ideg[static_cast<std::size_t>(r.item)];
    }
    std::vector<Interaction> next;
    next.reserve(kept.size());
    for (const auto& r : kept) {
      if (udeg[static_cast<std::size_t>(r.user)] >= static_cast<std::size_t>(k) &&
          ideg[static_cast<std::size_t>(r.item)] >= static_cast<std::size_t>(k)) {
        next.push_back(r);
      }
    }
    const bool stable = next.size() == kept.size();
    kept = std::move(next);
    if (stable) break;
  }
  if (kept.empty()) {
    throw std::runtime_error("core_filter: no interactions survive the " + std::to_string(k) +
                             "-core filter");
  }
  return reindex(log, kept);
}

std::vector<IntervalGraph> partition_intervals(const InteractionLog& train, std::size_t T) {
  if (T < 1) throw std::invalid_argument("partition_intervals: T must be >= 1");
  if (train.records.empty()) throw std::invalid_argument("partition_intervals: empty training log");
  std::int64_t tb = train.records.front().timestamp;
  std::int64_t te = tb;
  for (const auto& r : train.records) {
    tb = std::min(tb, r.timestamp);
    te = std::max(te, r.timestamp);
  }
  if (tb == te && T > 1) {
    throw std::runtime_error("partition_intervals: all interactions share one timestamp, cannot split into " +
                             std::to_string(T) + " intervals");
  }
  std::vector<std::set<std::pair<std::size_t, std::size_t>>> edges(T);
  const std::int64_t span = te - tb;
  for (const auto& r : train.records) {
    std::size_t idx = 0;
    if (span > 0) {
      // exact membership test for boundaries t_b + k*(t_e-t_b)/T
      const __int128 scaled = static_cast<__int128>(r.timestamp - tb) * static_cast<__int128>(T);
      idx = static_cast<std::size_t>(scaled / span);
      if (idx >= T) idx = T - 1;  // t == t_e: last interval closed on the right
    }
    edges[idx].insert({static_cast<std::size_t>(r.user), static_cast<std::size_t>(r.item)});
  }
  std::vector<IntervalGraph> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<SparseEntry> entries;
    entries.reserve(edges[t].size());
    for (const auto& [u, v] : edges[t]) entries.push_back({u, v, 1.0});
    IntervalGraph g;
    g.period = t;
    g.t_start = tb + static_cast<std::int64_t>(static_cast<__int128>(span) * static_cast<__int128>(t) /
                                               static_cast<__int128>(T));
    g.t_end = t + 1 == T ? te
                         : tb + static_cast<std::int64_t>(static_cast<__int128>(span) *
                                                          static_cast<__int128>(t + 1) /
                                                          static_cast<__int128>(T));
    g.adjacency = SparseMatrix(static_cast<std::size_t>(train.user_count),
                               static_cast<std::size_t>(train.item_count), std::move(entries));
    out.push_back(std::move(g));
  }
  return out;
}

SplitDataset split_leave_two(const InteractionLog& log, std::size_t test_user_cap,
                             std::uint64_t seed, std::size_t num_negatives) {
  SplitDataset split;
  split.train.user_count = log.user_count;
  split.train.item_count = log.item_count;
  split.train.user_keys = log.user_keys;
  split.train.item_keys = log.item_keys;
  split.user_items.assign(static_cast<std::size_t>(log.user_count), {});

  // per-user slices; records are sorted by (user, timestamp)
  std::vector<std::int32_t> eligible;
  std::size_t i = 0;
  while (i < log.records.size()) {
    std::size_t j = i;
    const std::int32_t u = log.records[i].user;
    while (j < log.records.size() && log.records[j].user == u) ++j;
    const std::size_t n = j - i;
    if (n >= 3) {
      const auto& test_rec = log.records[j - 1];
      const auto& val_rec = log.records[j - 2];
      split.test.push_back({test_rec.user, test_rec.item, test_rec.timestamp});
      split.validation.push_back({val_rec.user, val_rec.item, val_rec.timestamp});
      for (std::size_t r = i; r + 2 < j; ++r) split.train.records.push_back(log.records[r]);
      eligible.push_back(u);
    } else {
      for (std::size_t r = i; r < j; ++r) split.train.records.push_back(log.records[r]);
    }
    for (std::size_t r = i; r < j; ++r) {
      split.user_items[static_cast<std::size_t>(u)].push_back(log.records[r].item);
    }
    i = j;
  }
  for (auto& items : split.user_items) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }

  Rng rng = make_stream(seed, Stream::SplitSample);
  std::vector<std::int32_t> pool = eligible;
  rng.shuffle(pool);
  const std::size_t take = std::min(test_user_cap, pool.size());
  split.test_users.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(split.test_users.begin(), split.test_users.end());

  const std::size_t J = static_cast<std::size_t>(log.item_count);
  for (std::int32_t u : split.test_users) {
    const auto& owned = split.user_items[static_cast<std::size_t>(u)];
    std::vector<std::int32_t> complement;
    complement.reserve(J - owned.size());
    std::size_t oi = 0;
    for (std::size_t v = 0; v < J; ++v) {
      if (oi < owned.size() && owned[oi] == static_cast<std::int32_t>(v)) {
        ++oi;
        continue;
      }
      complement.push_back(static_cast<std::int32_t>(v));
    }
    if (complement.size() <= num_negatives) {
      if (complement.size() < num_negatives) split.negative_shortfall_users.push_back(u);
      split.negatives.push_back(std::move(complement));
    } else {
      // partial Fisher-Yates: first num_negatives entries are a uniform draw
      for (std::size_t kdx = 0; kdx < num_negatives; ++kdx) {
        const std::size_t j = kdx + static_cast<std::size_t>(rng.below(complement.size() - kdx));
        std::swap(complement[kdx], complement[j]);
      }
      complement.resize(num_negatives);
      split.negatives.push_back(std::move(complement));
    }
  }
  return split;
}

std::vector<InstanceSequence> build_instance_sequences(const InteractionLog& train, std::size_t M) {
  if (M < 1) throw std::invalid_argument("build_instance_sequences: M must be >= 1");
  std::vector<InstanceSequence> out(static_cast<std::size_t>(train.user_count));
  for (std::int32_t u = 0; u < train.user_count; ++u) out[static_cast<std::size_t>(u)].user = u;
  std::size_t i = 0;
  while (i < train.records.size()) {
    std::size_t j = i;
    const std::int32_t u = train.records[i].user;
    while (j < train.records.size() && train.records[j].user == u) ++j;
    auto& seq = out[static_cast<std::size_t>(u)];
    const std::size_t n = j - i;
    const std::size_t start = n > M ? j - M : i;  // keep the most recent M
    for (std::size_t r = start; r < j; ++r) seq.item_ids.push_back(train.records[r].item);
    seq.valid_length = seq.item_ids.size();
    i = j;
  }
  return out;
}

std::vector<std::int32_t> sample_negatives(const SplitDataset& split, std::int32_t user,
                                           std::size_t n, Rng& rng) {
  if (user < 0 || static_cast<std::size_t>(user) >= split.user_items.size()) {
    throw std::out_of_range("sample_negatives: unknown user " + std::to_string(user));
  }
  const auto& owned = split.user_items[static_cast<std::size_t>(user)];
  const std::size_t J = static_cast<std::size_t>(split.train.item_count);
  if (owned.size() >= J) {
    throw std::runtime_error("sample_negatives: user " + std::to_string(user) +
                             " interacted with every item");
  }
  std::vector<std::int32_t> complement;
  complement.reserve(J - owned.size());
  std::size_t oi = 0;
  for (std::size_t v = 0; v < J; ++v) {
    if (oi < owned.size() && owned[oi] == static_cast<std::int32_t>(v)) {
      ++oi;
      continue;
    }
    complement.push_back(static_cast<std::int32_t>(v));
  }
  std::vector<std::int32_t> out;
  out.reserve(n);
  if (n <= complement.size()) {
    for (std::size_t kdx = 0; kdx < n; ++kdx) {
      const std::size_t j = kdx + static_cast<std::size_t>(rng.below(complement.size() - kdx));
      std::swap(complement[kdx], complement[j]);
      out.push_back(complement[kdx]);
    }
  } else {
    for (std::size_t kdx = 0; kdx < n; ++kdx) {
      out.push_back(complement[static_cast<std::size_t>(rng.below(complement.size()))]);
    }
  }
  return out;
}

std::vector<std::vector<EdgePair>> sample_ssl_edge_pairs(const std::vector<IntervalGraph>& graphs,
                                                         const std::vector<std::int32_t>& batch_users,
                                                         std::size_t n_sal, Rng& rng,
                                                         SslScope scope) {
  std::vector<std::vector<EdgePair>> out(graphs.size());
  std::unordered_set<std::int32_t> batch_set(batch_users.begin(), batch_users.end());
  for (std::size_t t = 0; t < graphs.size(); ++t) {
    const auto& edges = graphs[t].adjacency.entries();
    if (edges.empty()) continue;
    auto draw_any = [&]() -> const SparseEntry& {
      return edges[static_cast<std::size_t>(rng.below(edges.size()))];
    };
    if (scope == SslScope::Batch) {
      std::vector<std::size_t> incident;
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (batch_set.count(static_cast<std::int32_t>(edges[e].row))) incident.push_back(e);
      }
      if (incident.empty()) continue;
      for (std::size_t kdx = 0; kdx < n_sal; ++kdx) {
        const auto& first = edges[incident[static_cast<std::size_t>(rng.below(incident.size()))]];
        const auto& second = draw_any();
        out[t].push_back({static_cast<std::int32_t>(first.row), static_cast<std::int32_t>(first.col),
                          static_cast<std::int32_t>(second.row),
                          static_cast<std::int32_t>(second.col)});
      }
    } else {
      for (std::int32_t u : batch_users) {
        std::vector<std::size_t> mine;
        for (std::size_t e = 0; e < edges.size(); ++e) {
          if (edges[e].row == static_cast<std::size_t>(u)) mine.push_back(e);
        }
        if (mine.empty()) continue;
        for (std::size_t kdx = 0; kdx < n_sal; ++kdx) {
          const auto& first = edges[mine[static_cast<std::size_t>(rng.below(mine.size()))]];
          const auto& second = draw_any();
          out[t].push_back({static_cast<std::int32_t>(first.row),
                            static_cast<std::int32_t>(first.col),
                            static_cast<std::int32_t>(second.row),
                            static_cast<std::int32_t>(second.col)});
        }
      }
    }
  }
  return out;
}

InteractionLog make_two_cluster_log(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.users < 2 || spec.items < 4 || spec.events_per_user < 3) {
    throw std::invalid_argument("make_two_cluster_log: spec too small");
  }
  Rng rng = make_stream(seed, Stream::Synthetic);
  const std::int32_t half_items = spec.items / 2;
  std::string csv = "user,item,timestamp\n";
  const std::int64_t step = spec.horizon / static_cast<std::int64_t>(spec.events_per_user);
  const std::int32_t migrators = static_cast<std::int32_t>(spec.migrating_fraction *
                                                           static_cast<double>(spec.users));
  for (std::int32_t u = 0; u < spec.users; ++u) {
    const int base_pool = u % 2;
    const bool migrates = u < migrators;
    for (std::size_t e = 0; e < spec.events_per_user; ++e) {
      const std::int64_t ts = static_cast<std::int64_t>(e) * step +
                              static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(step)));
      int pool = base_pool;
      if (migrates && ts >= spec.horizon / 2) pool = 1 - base_pool;
      if (spec.cross_noise > 0.0 && rng.bernoulli(spec.cross_noise)) pool = 1 - pool;
      const std::int32_t item = pool == 0
                                    ? static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(half_items)))
                                    : half_items + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(
                                                       spec.items - half_items)));
      csv += "u" + std::to_string(u) + ",i" + std::to_string(item) + "," + std::to_string(ts) + "\n";
    }
  }
  return parse_interactions(csv, "<synthetic>");
}

}  // namespace selfgnn
