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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairrec/types.hpp"

namespace fairrec::metrics {

enum class MetricId { CC, RCR, CMAP, CDCG, CMRR, CRP };

const char* metric_name(MetricId m);
MetricId metric_from_name(const std::string& name);
inline constexpr MetricId kAllMetrics[] = {MetricId::CC,   MetricId::RCR,
                                           MetricId::CMAP, MetricId::CDCG,
                                           MetricId::CMRR, MetricId::CRP};

// --- Category-aware metrics over top-K lists -------------------------------
//
// All six take a collection of per-user ranked lists, the category matrix and
// one category. RCR, CMAP and CRP are undefined when the category has no
// catalog mass (floor(R_c) == 0 for CRP); undefined is reported as nullopt
// and excluded from GBS sums by the caller.

// Mean fractional share of category c in the lists.
double category_coverage(std::span<const RankedList> lists, const CategoryMatrix& cm,
                         CategoryIndex c);

// Top-K mass of c relative to its catalog mass R_c.
std::optional<double> relative_category_representation(std::span<const RankedList> lists,
                                                       const CategoryMatrix& cm,
                                                       CategoryIndex c);

// Average-precision style rank weighting, normalized by R_c.
std::optional<double> cmap(std::span<const RankedList> lists, const CategoryMatrix& cm,
                           CategoryIndex c);

// Logarithmic rank discount, base 2 (rank 1 discount is log2(2) = 1).
double cdcg(std::span<const RankedList> lists, const CategoryMatrix& cm, CategoryIndex c);

// Reciprocal-rank discount over every position.
double cmrr(std::span<const RankedList> lists, const CategoryMatrix& cm, CategoryIndex c);

// R-precision style: category mass within the top floor(R_c) ranks. Expects
// rankings deeper than K (ideally full rankings); if a ranking is shorter
// than floor(R_c) the numerator is truncated but the denominator stays
// floor(R_c).
std::optional<double> crp(std::span<const RankedList> full_rankings,
                          const CategoryMatrix& cm, CategoryIndex c);

std::optional<double> compute_metric(MetricId id, std::span<const RankedList> lists,
                                     const CategoryMatrix& cm, CategoryIndex c);

// --- Group fairness ---------------------------------------------------------

struct GroupCell {
  CategoryIndex category = 0;
  double male = 0.0;
  double female = 0.0;
  double delta = 0.0;   // |male - female|
  bool defined = true;  // false when the metric is undefined for this category

  bool operator==(const GroupCell&) const = default;
};

struct MetricReport {
  MetricId metric = MetricId::CC;
  std::vector<GroupCell> cells;
  double gbs = 0.0;  // sum of deltas over defined cells
  int undefined_cells = 0;

  bool operator==(const MetricReport&) const = default;
};

// Evaluates one metric per category for each gender group and aggregates the
// Gender Balance Score. CRP callers must pass full rankings.
MetricReport gbs(MetricId id, std::span<const RankedList> lists_male,
                 std::span<const RankedList> lists_female, const CategoryMatrix& cm,
                 std::span<const CategoryIndex> categories);

struct FairnessReport {
  int format_version = 1;
  std::string dataset_name;
  std::string model_name;
  std::uint64_t seed = 0;
  int k = 50;
  std::vector<std::string> category_names;  // aligned with cell category indices
  std::vector<MetricReport> metrics;
  // performance metric -> (k -> value), e.g. "hit_ratio" -> {50: 0.9}
  std::map<std::string, std::map<int, double>> performance;

  bool operator==(const FairnessReport&) const = default;
};

// --- Performance metrics ----------------------------------------------------
//
// test_items: per-user held-out items, indexed by user; users with no test
// items are excluded from the averages.

double hit_ratio_at_k(std::span<const RankedList> lists,
                      const std::vector<std::vector<ItemIndex>>& test_items, int k);

double ndcg_at_k(std::span<const RankedList> lists,
                 const std::vector<std::vector<ItemIndex>>& test_items, int k);

double precision_at_k(std::span<const RankedList> lists,
                      const std::vector<std::vector<ItemIndex>>& test_items, int k);

}  // namespace fairrec::metrics
