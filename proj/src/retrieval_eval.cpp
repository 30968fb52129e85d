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

#include "subpool/retrieval_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "subpool/error.hpp"
#include "subpool/subspace_pooling.hpp"

namespace subpool {

void EvalProtocol::validate() const {
  if (cmc_max_rank < 1) throw InvalidArgument("eval: CMC max rank must be >= 1");
  if (f_cutoff < 1) throw InvalidArgument("eval: F-score cutoff must be >= 1");
  if (subspace_rank < 1) throw InvalidArgument("eval: subspace rank must be >= 1");
}

double descriptor_distance(std::span<const double> a, std::span<const double> b, const EvalProtocol& protocol) {
  if (a.size() != b.size()) {
    throw InvalidArgument("descriptor_distance: lengths " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()) + " differ");
  }
  if (protocol.metric == DescriptorMetric::projection) {
    if (a.size() % protocol.subspace_rank != 0) {
      throw InvalidArgument("descriptor_distance: length " + std::to_string(a.size()) +
                            " is not a multiple of the subspace rank");
    }
    const std::size_t c = a.size() / protocol.subspace_rank;
    return projection_distance(unflatten(a, c), unflatten(b, c));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<RankedEntry> rank_gallery(const Sample& query, std::span<const Sample> gallery,
                                      const EvalProtocol& protocol) {
  std::vector<RankedEntry> ranking;
  ranking.reserve(gallery.size());
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    const Sample& s = gallery[g];
    const bool junk = s.person_id < 0;
    if (!junk && protocol.cross_camera && s.person_id == query.person_id && s.camera_id == query.camera_id) {
      continue;
    }
    RankedEntry e;
    e.gallery_index = g;
    e.distance = descriptor_distance(query.descriptor, s.descriptor, protocol);
    e.junk = junk;
    e.relevant = !junk && s.person_id == query.person_id;
    ranking.push_back(e);
  }
  if (ranking.empty()) {
    throw InvalidArgument("rank_gallery: no gallery entry left for query '" + query.tag + "' after filtering");
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const RankedEntry& x, const RankedEntry& y) { return x.distance < y.distance; });
  return ranking;
}

std::vector<bool> relevance_flags(std::span<const RankedEntry> ranking) {
  std::vector<bool> flags;
  flags.reserve(ranking.size());
  for (const auto& e : ranking)
    if (!e.junk) flags.push_back(e.relevant);
  return flags;
}

double average_precision(const std::vector<bool>& relevance, std::size_t total_relevant) {
  if (total_relevant == 0) throw InvalidArgument("average_precision: no relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < relevance.size(); ++t) {
    if (!relevance[t]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(t + 1);
  }
  return sum / static_cast<double>(total_relevant);
}

std::vector<double> cmc(const std::vector<std::vector<bool>>& relevance, std::size_t max_rank) {
  std::vector<double> curve(max_rank, 0.0);
  if (relevance.empty()) return curve;
  std::vector<std::size_t> first_hit_counts(max_rank, 0);
  for (const auto& list : relevance) {
    const auto it = std::find(list.begin(), list.end(), true);
    if (it == list.end()) continue;
    const auto pos = static_cast<std::size_t>(it - list.begin());
    if (pos < max_rank) ++first_hit_counts[pos];
  }
  std::size_t cumulative = 0;
  for (std::size_t r = 0; r < max_rank; ++r) {
    cumulative += first_hit_counts[r];
    curve[r] = static_cast<double>(cumulative) / static_cast<double>(relevance.size());
  }
  return curve;
}

namespace {

double f_score_one(const std::vector<bool>& list, std::size_t cutoff) {
  const auto total = static_cast<std::size_t>(std::count(list.begin(), list.end(), true));
  const std::size_t upto = std::min(cutoff, list.size());
  const auto hits =
      static_cast<std::size_t>(std::count(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(upto), true));
  if (hits == 0 || total == 0) return 0.0;
  const double p = static_cast<double>(hits) / static_cast<double>(cutoff);
  const double r = static_cast<double>(hits) / static_cast<double>(total);
  return 2.0 * p * r / (p + r);
}

}  // namespace

double f_score(const std::vector<std::vector<bool>>& relevance, std::size_t cutoff) {
  if (cutoff < 1) throw InvalidArgument("f_score: cutoff must be >= 1");
  if (relevance.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& list : relevance) sum += f_score_one(list, cutoff);
  return sum / static_cast<double>(relevance.size());
}

std::vector<Sample> pool_queries(std::span<const Sample> queries, const EvalProtocol& protocol) {
  if (protocol.mode == QueryMode::single) return {queries.begin(), queries.end()};

  std::vector<std::vector<std::size_t>> groups;
  std::map<std::pair<int, int>, std::size_t> index;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto key = std::make_pair(queries[i].person_id, queries[i].camera_id);
    auto [it, inserted] = index.emplace(key, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  std::vector<Sample> pooled;
  pooled.reserve(groups.size());
  for (const auto& members : groups) {
    const Sample& first = queries[members.front()];
    Sample s;
    s.person_id = first.person_id;
    s.camera_id = first.camera_id;
    s.tag = first.tag;
    s.descriptor = first.descriptor;
    if (members.size() > 1) {
      s.tag += "+" + std::to_string(members.size() - 1);
      for (std::size_t m = 1; m < members.size(); ++m) {
        const auto& d = queries[members[m]].descriptor;
        if (d.size() != s.descriptor.size()) throw InvalidArgument("pool_queries: descriptor lengths differ");
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (protocol.pooling == MultiQueryPooling::average) {
            s.descriptor[i] += d[i];
          } else {
            s.descriptor[i] = std::max(s.descriptor[i], d[i]);
          }
        }
      }
      if (protocol.pooling == MultiQueryPooling::average) {
        for (double& v : s.descriptor) v /= static_cast<double>(members.size());
      }
      if (protocol.metric == DescriptorMetric::projection) {
        const std::size_t c = s.descriptor.size() / protocol.subspace_rank;
        s.descriptor = flatten(orthonormalize(unflatten(s.descriptor, c), protocol.subspace_rank));
      }
    }
    pooled.push_back(std::move(s));
  }
  return pooled;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

EvalReport evaluate(std::span<const Sample> queries, std::span<const Sample> gallery, const EvalProtocol& protocol) {
  protocol.validate();
  if (queries.empty()) throw InvalidArgument("evaluate: no queries");
  if (gallery.empty()) throw InvalidArgument("evaluate: empty gallery");

  const std::vector<Sample> pooled = pool_queries(queries, protocol);
  std::vector<std::vector<bool>> lists(pooled.size());
  parallel_for(pooled.size(), protocol.threads,
               [&](std::size_t q) { lists[q] = relevance_flags(rank_gallery(pooled[q], gallery, protocol)); });

  // Aggregate in query order so the result does not depend on scheduling.
  EvalReport report;
  std::vector<std::vector<bool>> scored;
  for (auto& list : lists) {
    const auto total = static_cast<std::size_t>(std::count(list.begin(), list.end(), true));
    if (total == 0) {
      ++report.num_skipped;
      continue;
    }
    report.per_query_ap.push_back(average_precision(list, total));
    scored.push_back(std::move(list));
  }
  report.num_queries = scored.size();
  if (!scored.empty()) {
    report.mean_ap = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) /
                     static_cast<double>(scored.size());
  }
  report.cmc = cmc(scored, protocol.cmc_max_rank);
  report.f_score = f_score(scored, protocol.f_cutoff);
  return report;
}

std::vector<RankingRow> export_ranking(std::span<const Sample> queries, std::span<const Sample> gallery,
                                       const EvalProtocol& protocol, std::size_t depth) {
  if (depth < 1) throw InvalidArgument("export_ranking: depth must be >= 1");
  const std::vector<Sample> pooled = pool_queries(queries, protocol);
  std::vector<std::vector<RankedEntry>> rankings(pooled.size());
  parallel_for(pooled.size(), protocol.threads,
               [&](std::size_t q) { rankings[q] = rank_gallery(pooled[q], gallery, protocol); });

  auto label = [](const Sample& s, std::size_t index) { return s.tag.empty() ? std::to_string(index) : s.tag; };
  std::vector<RankingRow> rows;
  for (std::size_t q = 0; q < pooled.size(); ++q) {
    const auto& ranking = rankings[q];
    const std::size_t upto = std::min(depth, ranking.size());
    for (std::size_t r = 0; r < upto; ++r) {
      const auto& e = ranking[r];
      const Sample& g = gallery[e.gallery_index];
      rows.push_back({label(pooled[q], q), r + 1, label(g, e.gallery_index), e.distance, g.person_id, g.camera_id,
                      e.relevant});
    }
  }
  return rows;
}

void write_ranking_csv(std::ostream& out, std::span<const RankingRow> rows) {
  out << kRankingHeader << '\n';
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.distance);
    out << r.query << ',' << r.rank << ',' << r.gallery << ',' << buf << ',' << r.person_id << ',' << r.camera_id
        << ',' << (r.relevant ? "true" : "false") << '\n';
  }
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["map"] = report.mean_ap;
  j["cmc"] = report.cmc;
  j["f_score"] = report.f_score;
  j["num_queries"] = report.num_queries;
  j["num_skipped"] = report.num_skipped;
  return j.dump();
}

}  // namespace subpool
