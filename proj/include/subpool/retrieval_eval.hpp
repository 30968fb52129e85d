// Copyright 2026 The subpool Authors.
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

// Query/gallery retrieval evaluation: ranking, AP/mAP, CMC, F-score and
// ranking-list export, under single- and multi-query protocols.
//
// Conventions:
//  * Gallery entries are ranked by ascending distance; equal distances keep
//    gallery order.
//  * With the cross-camera filter on, gallery entries sharing both person id
//    and camera with the query are dropped from the ranking.
//  * Junk entries (person id -1) stay in the exported ranking but are removed
//    before any metric is computed, so they neither count as hits nor
//    lower precision.
//  * Queries with no relevant gallery entry are skipped and counted.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace subpool {

enum class DescriptorMetric {
  /// Euclidean distance between flattened descriptors.
  flattened_euclidean,
  /// Projection distance between the subspaces the descriptors span.
  projection,
};

enum class QueryMode { single, multi };
enum class MultiQueryPooling { average, max };

struct Sample {
  std::vector<double> descriptor;
  int person_id = 0;
  int camera_id = 0;
  std::string tag;
};

struct EvalProtocol {
  QueryMode mode = QueryMode::single;
  bool cross_camera = true;
  DescriptorMetric metric = DescriptorMetric::flattened_euclidean;
  /// Columns per descriptor; only used by the projection metric, which
  /// reshapes a flattened descriptor of length c*k back to c x k.
  std::size_t subspace_rank = 1;
  std::size_t cmc_max_rank = 20;
  std::size_t f_cutoff = 10;
  MultiQueryPooling pooling = MultiQueryPooling::average;
  std::size_t threads = 1;

  void validate() const;
};

struct RankedEntry {
  std::size_t gallery_index = 0;
  double distance = 0.0;
  bool relevant = false;
  bool junk = false;
};

struct EvalReport {
  double mean_ap = 0.0;
  std::vector<double> cmc;  // cmc[r - 1] for r = 1..R_max
  double f_score = 0.0;
  std::vector<double> per_query_ap;  // scored queries only, in query order
  std::size_t num_queries = 0;       // scored queries
  std::size_t num_skipped = 0;       // queries without a relevant gallery entry
};

/// Distance between two flattened descriptors under `protocol.metric`.
double descriptor_distance(std::span<const double> a, std::span<const double> b, const EvalProtocol& protocol);

/// Effective gallery of one query sorted by ascending distance.
/// Throws InvalidArgument when the filter leaves nothing to rank.
std::vector<RankedEntry> rank_gallery(const Sample& query, std::span<const Sample> gallery,
                                      const EvalProtocol& protocol);

/// Relevance flags in rank order with junk removed.
std::vector<bool> relevance_flags(std::span<const RankedEntry> ranking);

/// Uninterpolated AP: (1/R) * sum of precision@t over ranks t holding a hit.
/// Throws InvalidArgument when R is 0.
double average_precision(const std::vector<bool>& relevance, std::size_t total_relevant);

/// cmc[r-1] = fraction of lists whose first hit is at rank <= r.
std::vector<double> cmc(const std::vector<std::vector<bool>>& relevance, std::size_t max_rank);

/// Mean over lists of 2PR/(P+R) with P = hits@r / r and R = hits@r / total
/// relevant in the list (0 when P + R = 0).
double f_score(const std::vector<std::vector<bool>>& relevance, std::size_t cutoff);

/// Multi-query protocol: one pooled query per (person, camera) group in
/// order of first appearance. Single-query returns the queries unchanged.
std::vector<Sample> pool_queries(std::span<const Sample> queries, const EvalProtocol& protocol);

EvalReport evaluate(std::span<const Sample> queries, std::span<const Sample> gallery, const EvalProtocol& protocol);

struct RankingRow {
  std::string query;
  std::size_t rank = 0;  // 1-based
  std::string gallery;
  double distance = 0.0;
  int person_id = 0;
  int camera_id = 0;
  bool relevant = false;
};

inline constexpr const char* kRankingHeader = "query,rank,gallery,distance,person_id,camera_id,relevant";

/// Top-`depth` rows of each (pooled) query's ranking, junk included.
std::vector<RankingRow> export_ranking(std::span<const Sample> queries, std::span<const Sample> gallery,
                                       const EvalProtocol& protocol, std::size_t depth);

void write_ranking_csv(std::ostream& out, std::span<const RankingRow> rows);
/// JSON object with keys map, cmc, f_score, num_queries, num_skipped.
std::string report_to_json(const EvalReport& report);

}  // namespace subpool
