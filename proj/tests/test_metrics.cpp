// Copyright 2025 The fairrec Authors
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fairrec/data_ingest.hpp"
#include "fairrec/metrics.hpp"
#include "fairrec/serialize.hpp"
#include "testutil.hpp"

using namespace fairrec;
using namespace fairrec::metrics;
using testutil::make_dataset;

namespace {

// catalog {A:{c}, B:{c,d}, C:{d}} used across several hand-derived examples
struct SmallCatalog {
  Dataset ds = make_dataset(2, {{"c"}, {"c", "d"}, {"d"}}, {"c", "d"});
  CategoryMatrix cm = ingest::build_category_matrix(ds);
  CategoryIndex c = 0, d = 1;
};

RankedList list_of(UserIndex u, std::vector<ItemIndex> items) {
  return {u, std::move(items)};
}

}  // namespace

TEST_CASE("category coverage matches hand-derived values") {
  SUBCASE("single fully-matching item") {
    auto ds = make_dataset(1, {{"Action"}}, {"Action"});
    auto cm = ingest::build_category_matrix(ds);
    std::vector<RankedList> lists{list_of(0, {0})};
    CHECK(category_coverage(lists, cm, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two users, Eq-1 hand evaluation") {
    // u1 top-2 = [A{Action}, B{Action,Romance}], u2 top-2 = [C{Romance}, D{Drama,Romance}]
    auto ds = make_dataset(
        2, {{"Action"}, {"Action", "Romance"}, {"Romance"}, {"Drama", "Romance"}},
        {"Action", "Drama", "Romance"});
    auto cm = ingest::build_category_matrix(ds);
    std::vector<RankedList> lists{list_of(0, {0, 1}), list_of(1, {2, 3})};
    CHECK(category_coverage(lists, cm, 0) == doctest::Approx(0.375).epsilon(1e-12));
  }
  SUBCASE("category-less items only") {
    auto ds = make_dataset(1, {{}, {}}, {"Action"});
    auto cm = ingest::build_category_matrix(ds);
    std::vector<RankedList> lists{list_of(0, {0, 1})};
    CHECK(category_coverage(lists, cm, 0) == 0.0);
  }
  SUBCASE("errors") {
    SmallCatalog f;
    std::vector<RankedList> empty;
    CHECK_THROWS_AS(category_coverage(empty, f.cm, f.c), std::invalid_argument);
    std::vector<RankedList> with_empty{list_of(0, {})};
    CHECK_THROWS_AS(category_coverage(with_empty, f.cm, f.c), std::invalid_argument);
  }
}

TEST_CASE("relative category representation") {
  SmallCatalog f;
  CHECK(f.cm.catalog_mass[f.c] == doctest::Approx(1.5).epsilon(1e-12));

  SUBCASE("hand evaluation: (1 + 0.5) / 1.5") {
    std::vector<RankedList> lists{list_of(0, {0, 1})};
    CHECK(relative_category_representation(lists, f.cm, f.c).value() ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("no category mass in the list") {
    std::vector<RankedList> lists{list_of(0, {2})};  // C:{d}
    CHECK(relative_category_representation(lists, f.cm, f.c).value() == 0.0);
  }
  SUBCASE("mean invariance for identical lists") {
    std::vector<RankedList> one{list_of(0, {0, 1})};
    std::vector<RankedList> two{list_of(0, {0, 1}), list_of(1, {0, 1})};
    CHECK(relative_category_representation(two, f.cm, f.c).value() ==
          doctest::Approx(relative_category_representation(one, f.cm, f.c).value())
              .epsilon(1e-12));
  }
  SUBCASE("undefined when the category has no catalog mass") {
    auto ds = make_dataset(1, {{"c"}}, {"c", "ghost"});
    auto cm = ingest::build_category_matrix(ds);
    std::vector<RankedList> lists{list_of(0, {0})};
    CHECK_FALSE(relative_category_representation(lists, cm, 1).has_value());
  }
}

TEST_CASE("cmap") {
  SmallCatalog f;
  SUBCASE("hand evaluation: (1*1 + 0.75*0.5) / 1.5") {
    std::vector<RankedList> lists{list_of(0, {0, 1})};
    CHECK(cmap(lists, f.cm, f.c).value() == doctest::Approx(0.9167).epsilon(1e-4));
  }
  SUBCASE("zero category mass") {
    std::vector<RankedList> lists{list_of(0, {2})};
    CHECK(cmap(lists, f.cm, f.c).value() == 0.0);
  }
  SUBCASE("moving the single category item down strictly decreases the value") {
    auto ds = make_dataset(1, {{"c"}, {}, {}, {}}, {"c"});
    auto cm = ingest::build_category_matrix(ds);
    double prev = 2.0;
    for (std::size_t pos = 0; pos < 4; ++pos) {
      std::vector<ItemIndex> items{1, 2, 3};
      items.insert(items.begin() + pos, 0);
      std::vector<RankedList> lists{list_of(0, items)};
      const double v = cmap(lists, cm, 0).value();
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("cdcg") {
  SmallCatalog f;
  SUBCASE("hand evaluation: (0.5 + 1/log2(3)) / 2") {
    std::vector<RankedList> lists{list_of(0, {1, 0})};  // [B{c,d}, A{c}]
    CHECK(cdcg(lists, f.cm, f.c) == doctest::Approx(0.5655).epsilon(1e-4));
  }
  SUBCASE("K=1 equals category coverage (log2(2) = 1)") {
    std::vector<RankedList> lists{list_of(0, {0})};
    CHECK(cdcg(lists, f.cm, f.c) ==
          doctest::Approx(category_coverage(lists, f.cm, f.c)).epsilon(1e-12));
  }
  SUBCASE("zero mass") {
    std::vector<RankedList> lists{list_of(0, {2})};
    CHECK(cdcg(lists, f.cm, f.c) == 0.0);
  }
}

TEST_CASE("cmrr") {
  SmallCatalog f;
  SUBCASE("hand evaluation: (0.5/1 + 1/2) / 2") {
    std::vector<RankedList> lists{list_of(0, {1, 0})};
    CHECK(cmrr(lists, f.cm, f.c) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("single full item at rank 1") {
    std::vector<RankedList> lists{list_of(0, {0})};
    CHECK(cmrr(lists, f.cm, f.c) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero mass") {
    std::vector<RankedList> lists{list_of(0, {2})};
    CHECK(cmrr(lists, f.cm, f.c) == 0.0);
  }
}

TEST_CASE("crp") {
  SmallCatalog f;  // floor(R_c) = floor(1.5) = 1
  SUBCASE("ranking starting with the full-fraction item") {
    std::vector<RankedList> rankings{list_of(0, {0, 1, 2})};
    CHECK(crp(rankings, f.cm, f.c).value() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("top floor(R_c) items carry no category mass") {
    std::vector<RankedList> rankings{list_of(0, {2, 0, 1})};
    CHECK(crp(rankings, f.cm, f.c).value() == 0.0);
  }
  SUBCASE("half-fraction item at rank 1") {
    std::vector<RankedList> rankings{list_of(0, {1, 0, 2})};
    CHECK(crp(rankings, f.cm, f.c).value() == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("undefined when floor(R_c) = 0") {
    auto ds = make_dataset(1, {{"c", "d"}, {"d"}}, {"c", "d"});  // R_c = 0.5
    auto cm = ingest::build_category_matrix(ds);
    std::vector<RankedList> rankings{list_of(0, {0, 1})};
    CHECK_FALSE(crp(rankings, cm, 0).has_value());
  }
  SUBCASE("short ranking truncates the numerator but keeps the denominator") {
    // R_c = 3 over three full-fraction items; a ranking of length 1 can reach
    // at most 1/3.
    auto ds = make_dataset(1, {{"c"}, {"c"}, {"c"}}, {"c"});
    auto cm = ingest::build_category_matrix(ds);
    std::vector<RankedList> rankings{list_of(0, {0})};
    CHECK(crp(rankings, cm, 0).value() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("gbs") {
  SmallCatalog f;
  const std::vector<CategoryIndex> cats{0, 1};

  SUBCASE("identical group lists give zero deltas and zero GBS") {
    std::vector<RankedList> m{list_of(0, {0, 1})};
    std::vector<RankedList> w{list_of(1, {0, 1})};
    const auto report = gbs(MetricId::CC, m, w, f.cm, cats);
    for (const auto& cell : report.cells) {
      CHECK(cell.defined);
      CHECK(cell.delta == 0.0);
    }
    CHECK(report.gbs == 0.0);
  }
  SUBCASE("label swap leaves GBS unchanged") {
    std::vector<RankedList> m{list_of(0, {0, 1}), list_of(2, {1, 2})};
    std::vector<RankedList> w{list_of(1, {2, 0})};
    const auto a = gbs(MetricId::CDCG, m, w, f.cm, cats);
    const auto b = gbs(MetricId::CDCG, w, m, f.cm, cats);
    CHECK(a.gbs == doctest::Approx(b.gbs).epsilon(1e-12));
  }
  SUBCASE("hand evaluation: disjoint single-category lists") {
    std::vector<RankedList> m{list_of(0, {0})};  // A{c}
    std::vector<RankedList> w{list_of(1, {2})};  // C{d}
    const auto report = gbs(MetricId::CC, m, w, f.cm, cats);
    CHECK(report.cells[0].delta == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.cells[1].delta == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.gbs == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("report cell consistency: delta and gbs recompute") {
    const auto inst = testutil::random_instance(99);
    std::vector<RankedList> m, w;
    for (const auto& l : inst.lists) {
      (inst.ds.users[l.user].gender == Gender::Male ? m : w).push_back(l);
    }
    if (m.empty() || w.empty()) return;
    std::vector<CategoryIndex> all;
    for (std::size_t c = 0; c < inst.ds.category_vocabulary.size(); ++c) {
      all.push_back(static_cast<CategoryIndex>(c));
    }
    const auto report = gbs(MetricId::CC, m, w, inst.cm, all);
    double total = 0.0;
    for (const auto& cell : report.cells) {
      if (!cell.defined) continue;
      CHECK(cell.delta == doctest::Approx(std::abs(cell.male - cell.female)).epsilon(1e-12));
      total += cell.delta;
    }
    CHECK(report.gbs == doctest::Approx(total).epsilon(1e-9));
    CHECK(report.gbs >= 0.0);
  }
  SUBCASE("empty group is an error") {
    std::vector<RankedList> m{list_of(0, {0})};
    std::vector<RankedList> none;
    CHECK_THROWS_WITH_AS(gbs(MetricId::CC, m, none, f.cm, cats),
                         "female group has zero users", std::invalid_argument);
    CHECK_THROWS_WITH_AS(gbs(MetricId::CC, none, m, f.cm, cats),
                         "male group has zero users", std::invalid_argument);
  }
}

TEST_CASE("metric invariants") {
  SUBCASE("sum over categories of CC is 1 when every item is categorized") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
      const auto inst = testutil::random_instance(seed, /*all_categorized=*/true);
      KahanSum total;
      for (std::size_t c = 0; c < inst.ds.category_vocabulary.size(); ++c) {
        total.add(category_coverage(inst.lists, inst.cm, static_cast<CategoryIndex>(c)));
      }
      CHECK(total.value() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("constant-sum identities for CDCG and CMRR") {
    const auto inst = testutil::random_instance(7, /*all_categorized=*/true);
    const std::size_t k = inst.lists[0].items.size();
    double expect_cdcg = 0.0, expect_cmrr = 0.0;
    for (std::size_t j = 1; j <= k; ++j) {
      expect_cdcg += 1.0 / std::log2(j + 1.0);
      expect_cmrr += 1.0 / j;
    }
    expect_cdcg /= k;
    expect_cmrr /= k;
    KahanSum total_cdcg, total_cmrr;
    for (std::size_t c = 0; c < inst.ds.category_vocabulary.size(); ++c) {
      total_cdcg.add(cdcg(inst.lists, inst.cm, static_cast<CategoryIndex>(c)));
      total_cmrr.add(cmrr(inst.lists, inst.cm, static_cast<CategoryIndex>(c)));
    }
    CHECK(total_cdcg.value() == doctest::Approx(expect_cdcg).epsilon(1e-9));
    CHECK(total_cmrr.value() == doctest::Approx(expect_cmrr).epsilon(1e-9));
  }
  SUBCASE("ordering chain CMRR <= CDCG <= CC per category per user list") {
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
      const auto inst = testutil::random_instance(seed);
      for (const auto& l : inst.lists) {
        std::vector<RankedList> single{l};
        for (std::size_t c = 0; c < inst.ds.category_vocabulary.size(); ++c) {
          const auto ci = static_cast<CategoryIndex>(c);
          const double v_cc = category_coverage(single, inst.cm, ci);
          const double v_cdcg = cdcg(single, inst.cm, ci);
          const double v_cmrr = cmrr(single, inst.cm, ci);
          CHECK(v_cmrr <= v_cdcg + 1e-12);
          CHECK(v_cdcg <= v_cc + 1e-12);
        }
      }
    }
  }
  SUBCASE("CC and RCR are permutation invariant") {
    const auto inst = testutil::random_instance(21);
    auto lists = inst.lists;
    std::vector<RankedList> reversed = lists;
    for (auto& l : reversed) std::reverse(l.items.begin(), l.items.end());
    for (std::size_t c = 0; c < inst.ds.category_vocabulary.size(); ++c) {
      const auto ci = static_cast<CategoryIndex>(c);
      CHECK(category_coverage(lists, inst.cm, ci) ==
            doctest::Approx(category_coverage(reversed, inst.cm, ci)).epsilon(1e-12));
      const auto a = relative_category_representation(lists, inst.cm, ci);
      const auto b = relative_category_representation(reversed, inst.cm, ci);
      CHECK(a.has_value() == b.has_value());
      if (a.has_value()) CHECK(*a == doctest::Approx(*b).epsilon(1e-12));
    }
  }
  SUBCASE("rank-discounted metrics strictly decrease as the category item drops") {
    auto ds = make_dataset(1, {{"c"}, {}, {}, {}, {}}, {"c"});
    auto cm = ingest::build_category_matrix(ds);
    double prev_cdcg = 2.0, prev_cmrr = 2.0;
    for (std::size_t pos = 0; pos < 5; ++pos) {
      std::vector<ItemIndex> items{1, 2, 3, 4};
      items.insert(items.begin() + pos, 0);
      std::vector<RankedList> lists{list_of(0, items)};
      const double v_cdcg = cdcg(lists, cm, 0);
      const double v_cmrr = cmrr(lists, cm, 0);
      CHECK(v_cdcg < prev_cdcg);
      CHECK(v_cmrr < prev_cmrr);
      prev_cdcg = v_cdcg;
      prev_cmrr = v_cmrr;
    }
  }
}

TEST_CASE("performance metrics") {
  // 3 users; catalog of 6 items, categories irrelevant here.
  std::vector<std::vector<ItemIndex>> test_items(3);
  test_items[0] = {5};
  test_items[1] = {4};
  test_items[2] = {};

  SUBCASE("hit ratio") {
    std::vector<RankedList> lists{list_of(0, {5, 1}), list_of(1, {0, 1})};
    CHECK(hit_ratio_at_k(lists, test_items, 2) == doctest::Approx(0.5).epsilon(1e-12));
    std::vector<RankedList> hit{list_of(0, {5, 1})};
    CHECK(hit_ratio_at_k(hit, test_items, 2) == 1.0);
    std::vector<RankedList> miss{list_of(1, {0, 1})};
    CHECK(hit_ratio_at_k(miss, test_items, 2) == 0.0);
    std::vector<RankedList> excluded{list_of(2, {0, 1})};  // user 2 has no test items
    CHECK_THROWS_AS(hit_ratio_at_k(excluded, test_items, 2), std::invalid_argument);
  }
  SUBCASE("ndcg") {
    std::vector<RankedList> ideal{list_of(0, {5, 1, 2})};
    CHECK(ndcg_at_k(ideal, test_items, 3) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<RankedList> none{list_of(0, {1, 2, 3})};
    CHECK(ndcg_at_k(none, test_items, 3) == 0.0);
    // one test item at rank 2, |test| = 1: 1/log2(3)
    std::vector<RankedList> rank2{list_of(0, {1, 5, 2})};
    CHECK(ndcg_at_k(rank2, test_items, 50) ==
          doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-4));
  }
  SUBCASE("ndcg is 1 iff all test items occupy the top consecutive ranks") {
    std::vector<std::vector<ItemIndex>> test(1);
    test[0] = {2, 3};
    std::vector<RankedList> top{list_of(0, {3, 2, 0, 1})};
    CHECK(ndcg_at_k(top, test, 4) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<RankedList> gap{list_of(0, {3, 0, 2, 1})};
    CHECK(ndcg_at_k(gap, test, 4) < 1.0);
  }
  SUBCASE("precision") {
    std::vector<std::vector<ItemIndex>> test(1);
    test[0] = {0, 1, 2};
    std::vector<RankedList> three_hits{
        list_of(0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9})};
    CHECK(precision_at_k(three_hits, test, 10) == doctest::Approx(0.3).epsilon(1e-12));
    std::vector<RankedList> no_hits{list_of(0, {3, 4, 5, 6, 7, 8, 9, 10, 11, 12})};
    CHECK(precision_at_k(no_hits, test, 10) == 0.0);
    std::vector<std::vector<ItemIndex>> big_test(1);
    for (ItemIndex v = 0; v < 10; ++v) big_test[0].push_back(v);
    std::vector<RankedList> all_hits{list_of(0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9})};
    CHECK(precision_at_k(all_hits, big_test, 10) == 1.0);
  }
}

TEST_CASE("fairness report serialization round-trips") {
  SmallCatalog f;
  const std::vector<CategoryIndex> cats{0, 1};
  std::vector<RankedList> m{list_of(0, {0, 1})};
  std::vector<RankedList> w{list_of(1, {2, 0})};

  FairnessReport report;
  report.dataset_name = "tiny";
  report.model_name = "test";
  report.seed = 7;
  report.k = 2;
  report.category_names = {"c", "d"};
  for (MetricId id : kAllMetrics) {
    report.metrics.push_back(gbs(id, id == MetricId::CRP ? m : m,
                                 id == MetricId::CRP ? w : w, f.cm, cats));
  }
  report.performance["hit_ratio"][10] = 0.5;
  report.performance["ndcg"][10] = 0.25;

  const auto j = serialize::fairness_report_to_json(report);
  const auto back = serialize::fairness_report_from_json(j);
  CHECK(back == report);
}
