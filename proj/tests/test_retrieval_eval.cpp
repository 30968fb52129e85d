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

#include <random>
#include <sstream>

#include "doctest.h"
#include "eval_oracle.hpp"
#include "json.hpp"
#include "subpool/error.hpp"
#include "subpool/retrieval_eval.hpp"

using namespace subpool;
using namespace subpool::testing;

namespace {

Sample sample(std::vector<double> d, int id, int cam, std::string tag = "") {
  return Sample{std::move(d), id, cam, std::move(tag)};
}

}  // namespace

TEST_CASE("average precision on hand-worked lists") {
  CHECK(average_precision({true}, 1) == 1.0);
  CHECK(average_precision({false, true}, 1) == 0.5);
  // hits at ranks 1 and 3: (1/1 + 2/3) / 2
  CHECK(average_precision({true, false, true}, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK_THROWS_AS(average_precision({false}, 0), InvalidArgument);
}

TEST_CASE("cmc is a monotone step curve") {
  const auto curve = cmc({{false, true}, {true}, {false, false, true}}, 4);
  CHECK(curve == std::vector<double>{1.0 / 3, 2.0 / 3, 1.0, 1.0});
}

TEST_CASE("f-score uses precision over the cutoff") {
  // one hit in the top 2 of 2 relevant: P = 1/2, R = 1/2
  CHECK(f_score({{true, false, true}}, 2) == doctest::Approx(0.5));
  CHECK(f_score({{false, false, true}}, 2) == 0.0);
}

TEST_CASE("one query with its cross-camera match first") {
  const std::vector<Sample> q = {sample({0.0}, 1, 0)};
  const std::vector<Sample> g = {sample({0.1}, 1, 1), sample({5.0}, 2, 1)};
  const EvalReport r = evaluate(q, g, EvalProtocol{});
  CHECK(r.mean_ap == 1.0);
  CHECK(r.cmc[0] == 1.0);
  CHECK(r.num_queries == 1);
}

TEST_CASE("cross-camera filter drops same-camera matches, junk is never relevant") {
  const std::vector<Sample> q = {sample({0.0}, 1, 0)};
  const std::vector<Sample> g = {sample({0.0}, 1, 0, "same"), sample({0.05}, -1, 1, "junk"),
                                 sample({0.1}, 2, 1, "other"), sample({0.2}, 1, 1, "match")};
  EvalProtocol p;
  const auto ranking = rank_gallery(q[0], g, p);
  REQUIRE(ranking.size() == 3);
  CHECK(ranking[0].junk);
  CHECK(relevance_flags(ranking) == std::vector<bool>{false, true});
  CHECK(evaluate(q, g, p).mean_ap == 0.5);

  // same-camera match is back at rank 1, "other" sits between the two matches
  p.cross_camera = false;
  CHECK(evaluate(q, g, p).mean_ap == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("queries without relevant gallery entries are skipped and counted") {
  const std::vector<Sample> q = {sample({0.0}, 1, 0), sample({0.0}, 7, 0)};
  const std::vector<Sample> g = {sample({0.1}, 1, 1), sample({0.2}, 2, 1)};
  const EvalReport r = evaluate(q, g, EvalProtocol{});
  CHECK(r.num_queries == 1);
  CHECK(r.num_skipped == 1);
  CHECK(r.mean_ap == 1.0);
}

TEST_CASE("an empty filtered gallery is an error") {
  const std::vector<Sample> q = {sample({0.0}, 1, 0)};
  const std::vector<Sample> g = {sample({0.0}, 1, 0)};
  CHECK_THROWS_AS(evaluate(q, g, EvalProtocol{}), InvalidArgument);
}

TEST_CASE("multi-query on duplicated queries equals single-query") {
  std::mt19937_64 rng(31);
  for (auto metric : {DescriptorMetric::flattened_euclidean, DescriptorMetric::projection}) {
    EvalProtocol p;
    p.metric = metric;
    p.subspace_rank = 2;
    RetrievalInstance inst = random_instance(rng, p, 40);
    // keep one query per (id, camera) and duplicate it
    std::vector<Sample> single;
    std::map<std::pair<int, int>, bool> seen;
    for (const auto& q : inst.queries)
      if (!seen[{q.person_id, q.camera_id}]) {
        seen[{q.person_id, q.camera_id}] = true;
        single.push_back(q);
      }
    std::vector<Sample> doubled = single;
    doubled.insert(doubled.end(), single.begin(), single.end());
    const EvalReport a = evaluate(single, inst.gallery, p);
    p.mode = QueryMode::multi;
    const EvalReport b = evaluate(doubled, inst.gallery, p);
    CHECK(oracle_gap(b, OracleReport{a.mean_ap, a.cmc, a.f_score, a.num_queries, a.num_skipped}) <= 1e-12);
  }
}

TEST_CASE("reports equal the brute-force oracle") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 40; ++trial) {
    EvalProtocol p;
    p.metric = trial % 2 ? DescriptorMetric::projection : DescriptorMetric::flattened_euclidean;
    p.subspace_rank = 2;
    p.mode = trial % 4 < 2 ? QueryMode::single : QueryMode::multi;
    p.cross_camera = trial % 3 != 0;
    p.cmc_max_rank = 5;
    p.f_cutoff = 3;
    const RetrievalInstance inst = random_instance(rng, p, 50);
    try {
      const EvalReport r = evaluate(inst.queries, inst.gallery, p);
      CHECK(oracle_gap(r, oracle_evaluate(inst.queries, inst.gallery, p)) <= 1e-12);
    } catch (const InvalidArgument&) {
      // an entirely filtered gallery; the oracle has nothing to compare
    }
  }
}

TEST_CASE("thread count does not change the report") {
  std::mt19937_64 rng(33);
  EvalProtocol p;
  const RetrievalInstance inst = random_instance(rng, p, 50);
  const std::string one = report_to_json(evaluate(inst.queries, inst.gallery, p));
  p.threads = 4;
  CHECK(report_to_json(evaluate(inst.queries, inst.gallery, p)) == one);
}

TEST_CASE("ranking export clamps to the gallery and writes the documented CSV") {
  const std::vector<Sample> q = {sample({0.0}, 1, 0, "q")};
  const std::vector<Sample> g = {sample({0.5}, 2, 1, "b"), sample({0.25}, 1, 1, "a")};
  const auto rows = export_ranking(q, g, EvalProtocol{}, 5);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].gallery == "a");
  CHECK(rows[0].relevant);
  CHECK(export_ranking(q, g, EvalProtocol{}, 1).size() == 1);
  CHECK_THROWS_AS(export_ranking(q, g, EvalProtocol{}, 0), InvalidArgument);
  std::ostringstream out;
  write_ranking_csv(out, rows);
  CHECK(out.str() == "query,rank,gallery,distance,person_id,camera_id,relevant\n"
                     "q,1,a,0.25,1,1,true\n"
                     "q,2,b,0.5,2,1,false\n");
}

TEST_CASE("json report has the documented keys in order") {
  EvalReport r;
  r.mean_ap = 0.5;
  r.cmc = {0.5, 1.0};
  r.f_score = 0.25;
  r.num_queries = 2;
  const auto j = nlohmann::ordered_json::parse(report_to_json(r));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"map", "cmc", "f_score", "num_queries", "num_skipped"});
  CHECK(j["map"] == 0.5);
}
