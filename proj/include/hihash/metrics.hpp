// Copyright 2026 The hihash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hihash/codec.hpp"
#include "hihash/diagnostics.hpp"
#include "hihash/error.hpp"
#include "hihash/hierarchy.hpp"

namespace hihash {

/// Ranked database indices for a set of queries plus everything needed to
/// score them. excluded[q], when set, is a database index that query q must
/// not be compared with (its own copy in the database).
struct RetrievalRun {
  std::vector<std::vector<std::size_t>> rankings;
  std::vector<LabelPath> query_paths;
  std::vector<LabelPath> database_paths;
  std::vector<std::optional<std::size_t>> excluded;
  SimilarityFn sim = shared_levels_similarity();

  std::size_t query_count() const noexcept { return rankings.size(); }

  std::optional<std::size_t> excluded_for(std::size_t q) const {
    return q < excluded.size() ? excluded[q] : std::nullopt;
  }

  /// Database items a query may legitimately retrieve.
  std::size_t candidate_count(std::size_t q) const {
    return database_paths.size() - (excluded_for(q) ? 1 : 0);
  }
};

enum class GainForm { Exponential, Linear };

/// AP over a ranking given as relevance flags. R is the number of relevant
/// items in the whole database; AP is 0 when R is 0.
inline double average_precision(std::span<const std::uint8_t> relevant, std::size_t total_relevant) {
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < relevant.size(); ++r) {
    if (!relevant[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(total_relevant);
}

/// Fine-level AP for one query: relevant means same leaf class.
inline double average_precision(const RetrievalRun& run, std::size_t q) {
  const ClassId leaf = run.query_paths.at(q).at(0);
  const auto skip = run.excluded_for(q);
  std::size_t total = 0;
  for (std::size_t i = 0; i < run.database_paths.size(); ++i)
    if (i != skip && run.database_paths[i][0] == leaf) ++total;
  std::vector<std::uint8_t> flags;
  flags.reserve(run.rankings[q].size());
  for (std::size_t idx : run.rankings[q]) flags.push_back(run.database_paths[idx][0] == leaf ? 1 : 0);
  return average_precision(flags, total);
}

namespace detail {

// Sim of every allowed database item to the query, sorted descending.
inline std::vector<double> ideal_similarities(const RetrievalRun& run, std::size_t q) {
  const auto skip = run.excluded_for(q);
  std::vector<double> sims;
  sims.reserve(run.database_paths.size());
  for (std::size_t i = 0; i < run.database_paths.size(); ++i)
    if (i != skip) sims.push_back(run.sim(run.query_paths[q], run.database_paths[i]));
  std::sort(sims.begin(), sims.end(), std::greater<>());
  return sims;
}

inline std::vector<double> ranked_similarities(const RetrievalRun& run, std::size_t q, std::size_t n) {
  const auto& ranking = run.rankings.at(q);
  require(ranking.size() >= n, ErrorCode::RankTooShort,
          "query " + std::to_string(q) + " ranks " + std::to_string(ranking.size()) + " items, need " +
              std::to_string(n));
  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) sims[i] = run.sim(run.query_paths[q], run.database_paths[ranking[i]]);
  return sims;
}

inline void check_cutoff(const RetrievalRun& run, std::size_t q, std::size_t n) {
  require(n >= 1, ErrorCode::RankTooShort, "cut-off must be at least 1");
  require(n <= run.candidate_count(q), ErrorCode::RankTooShort,
          "cut-off " + std::to_string(n) + " exceeds database size " + std::to_string(run.candidate_count(q)));
}

inline double gain(double rel, GainForm form) { return form == GainForm::Exponential ? std::exp2(rel) - 1.0 : rel; }

}  // namespace detail

/// HP@n: achieved similarity mass of the top n over the best achievable mass.
/// Defined as 1 when the best achievable mass is 0.
inline double hierarchical_precision_at(const RetrievalRun& run, std::size_t q, std::size_t n) {
  detail::check_cutoff(run, q, n);
  const auto got = detail::ranked_similarities(run, q, n);
  const auto ideal = detail::ideal_similarities(run, q);
  const double num = std::accumulate(got.begin(), got.end(), 0.0);
  const double den = std::accumulate(ideal.begin(), ideal.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
  return den > 0.0 ? num / den : 1.0;
}

/// AHP@n = mean of HP@m for m = 1..n.
inline double average_hierarchical_precision(const RetrievalRun& run, std::size_t q, std::size_t n) {
  detail::check_cutoff(run, q, n);
  const auto got = detail::ranked_similarities(run, q, n);
  const auto ideal = detail::ideal_similarities(run, q);
  double num = 0.0;
  double den = 0.0;
  double total = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    num += got[m];
    den += ideal[m];
    total += den > 0.0 ? num / den : 1.0;
  }
  return total / static_cast<double>(n);
}

inline double mahp(const RetrievalRun& run, std::size_t n) {
  if (run.query_count() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t q = 0; q < run.query_count(); ++q) sum += average_hierarchical_precision(run, q, n);
  return sum / static_cast<double>(run.query_count());
}

inline double mean_average_precision(const RetrievalRun& run) {
  if (run.query_count() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t q = 0; q < run.query_count(); ++q) sum += average_precision(run, q);
  return sum / static_cast<double>(run.query_count());
}

/// DCG with gain(rel) / log2(i + 1), normalized by the descending-similarity
/// ordering. Defined as 1 when the ideal DCG is 0.
inline double ndcg_at(const RetrievalRun& run, std::size_t q, std::size_t n, GainForm form = GainForm::Exponential) {
  detail::check_cutoff(run, q, n);
  const auto got = detail::ranked_similarities(run, q, n);
  const auto ideal = detail::ideal_similarities(run, q);
  double dcg = 0.0;
  double idcg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double discount = std::log2(static_cast<double>(i) + 2.0);
    dcg += detail::gain(got[i], form) / discount;
    idcg += detail::gain(ideal[i], form) / discount;
  }
  return idcg > 0.0 ? dcg / idcg : 1.0;
}

struct MetricConfig {
  std::size_t mahp_k = 100;
  std::size_t ndcg_k = 100;
  GainForm gain = GainForm::Exponential;
};

struct MetricReport {
  double map = 0.0;
  double mahp = 0.0;
  double ndcg = 0.0;
  std::size_t mahp_k = 0;
  std::size_t ndcg_k = 0;
  std::vector<double> query_ap;
  std::vector<double> query_ahp;
  std::vector<double> query_ndcg;
  std::vector<std::string> notes;
};

/// mAP@all, mAHP@K and nDCG@K over every query. Cut-offs larger than the
/// smallest candidate set are clamped with a warning.
inline MetricReport evaluate(const RetrievalRun& run, MetricConfig cfg) {
  MetricReport report;
  std::size_t smallest = run.database_paths.size();
  for (std::size_t q = 0; q < run.query_count(); ++q) smallest = std::min(smallest, run.candidate_count(q));
  auto clamp = [&](std::size_t& k, const char* name) {
    if (k > smallest) {
      const std::string note = std::string(name) + " cut-off " + std::to_string(k) + " clamped to " +
                               std::to_string(smallest);
      warn(note);
      report.notes.push_back(note);
      k = smallest;
    }
  };
  clamp(cfg.mahp_k, "mAHP");
  clamp(cfg.ndcg_k, "nDCG");
  report.mahp_k = cfg.mahp_k;
  report.ndcg_k = cfg.ndcg_k;
  const std::size_t Q = run.query_count();
  for (std::size_t q = 0; q < Q; ++q) {
    report.query_ap.push_back(average_precision(run, q));
    report.query_ahp.push_back(cfg.mahp_k > 0 ? average_hierarchical_precision(run, q, cfg.mahp_k) : 0.0);
    report.query_ndcg.push_back(cfg.ndcg_k > 0 ? ndcg_at(run, q, cfg.ndcg_k, cfg.gain) : 0.0);
  }
  auto mean = [Q](const std::vector<double>& v) {
    return Q == 0 ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(Q);
  };
  report.map = mean(report.query_ap);
  report.mahp = mean(report.query_ahp);
  report.ndcg = mean(report.query_ndcg);
  return report;
}

/// Ranks every database item for every query by Hamming distance. With
/// exclude_self, a database entry sharing the query's id is dropped.
inline RetrievalRun build_run(const CodeDatabase& queries, const CodeDatabase& database, bool exclude_self) {
  require(!database.empty(), ErrorCode::EmptyDatabase, "database is empty");
  require(queries.bits() == database.bits(), ErrorCode::LengthMismatch,
          "query codes have " + std::to_string(queries.bits()) + " bits, database has " +
              std::to_string(database.bits()));
  RetrievalRun run;
  run.database_paths = database.paths();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::optional<std::size_t> self;
    if (exclude_self) self = database.find_id(queries.id(q));
    std::vector<std::size_t> order;
    order.reserve(database.size());
    for (const auto& nb : knn(database, queries.code(q), database.size()))
      if (nb.index != self) order.push_back(nb.index);
    run.rankings.push_back(std::move(order));
    run.query_paths.push_back(queries.path(q));
    run.excluded.push_back(self);
  }
  return run;
}

inline nlohmann::json to_json(const MetricReport& r, bool per_query = false) {
  nlohmann::json j;
  j["map_all"] = r.map;
  j["mahp"] = r.mahp;
  j["mahp_k"] = r.mahp_k;
  j["ndcg"] = r.ndcg;
  j["ndcg_k"] = r.ndcg_k;
  j["queries"] = r.query_ap.size();
  if (!r.notes.empty()) j["notes"] = r.notes;
  if (per_query) {
    j["query_ap"] = r.query_ap;
    j["query_ahp"] = r.query_ahp;
    j["query_ndcg"] = r.query_ndcg;
  }
  return j;
}

inline void write_per_query_csv(std::ostream& out, const MetricReport& r) {
  out << "query,ap,ahp,ndcg\n";
  out.precision(17);
  for (std::size_t q = 0; q < r.query_ap.size(); ++q)
    out << q << ',' << r.query_ap[q] << ',' << r.query_ahp[q] << ',' << r.query_ndcg[q] << '\n';
}

}  // namespace hihash
