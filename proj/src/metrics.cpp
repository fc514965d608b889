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

#include "fairrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "fairrec/common.hpp"

namespace fairrec::metrics {
namespace {

void validate_lists(std::span<const RankedList> lists, const CategoryMatrix& cm,
                    CategoryIndex c, bool allow_empty_list = false) {
  if (lists.empty()) throw std::invalid_argument("metric needs at least one ranked list");
  if (c >= cm.num_categories) throw std::invalid_argument("category index out of range");
  if (!allow_empty_list) {
    for (const auto& l : lists) {
      if (l.items.empty()) throw std::invalid_argument("ranked list is empty");
    }
  }
}

double log2_discount(std::size_t rank) {  // rank is 1-based
  return std::log2(static_cast<double>(rank) + 1.0);
}

}  // namespace

const char* metric_name(MetricId m) {
  switch (m) {
    case MetricId::CC: return "CC";
    case MetricId::RCR: return "RCR";
    case MetricId::CMAP: return "CMAP";
    case MetricId::CDCG: return "CDCG";
    case MetricId::CMRR: return "CMRR";
    case MetricId::CRP: return "CRP";
  }
  return "?";
}

MetricId metric_from_name(const std::string& name) {
  for (MetricId m : kAllMetrics) {
    if (name == metric_name(m)) return m;
  }
  throw std::invalid_argument("unknown metric name '" + name + "'");
}

double category_coverage(std::span<const RankedList> lists, const CategoryMatrix& cm,
                         CategoryIndex c) {
  validate_lists(lists, cm, c);
  KahanSum over_users;
  for (const auto& l : lists) {
    KahanSum mass;
    for (ItemIndex v : l.items) mass.add(cm.frac(v, c));
    over_users.add(mass.value() / static_cast<double>(l.items.size()));
  }
  return over_users.value() / static_cast<double>(lists.size());
}

std::optional<double> relative_category_representation(std::span<const RankedList> lists,
                                                       const CategoryMatrix& cm,
                                                       CategoryIndex c) {
  validate_lists(lists, cm, c);
  const double r_c = cm.catalog_mass[c];
  if (r_c <= 0.0) return std::nullopt;
  KahanSum over_users;
  for (const auto& l : lists) {
    KahanSum mass;
    for (ItemIndex v : l.items) mass.add(cm.frac(v, c));
    over_users.add(mass.value() / r_c);
  }
  return over_users.value() / static_cast<double>(lists.size());
}

std::optional<double> cmap(std::span<const RankedList> lists, const CategoryMatrix& cm,
                           CategoryIndex c) {
  validate_lists(lists, cm, c);
  const double r_c = cm.catalog_mass[c];
  if (r_c <= 0.0) return std::nullopt;
  KahanSum over_users;
  for (const auto& l : lists) {
    KahanSum user_sum;
    double prefix = 0.0;  // sum of frac over ranks 1..j
    for (std::size_t j = 0; j < l.items.size(); ++j) {
      const double f = cm.frac(l.items[j], c);
      prefix += f;
      const double precision_j = prefix / static_cast<double>(j + 1);
      user_sum.add(precision_j * f);
    }
    over_users.add(user_sum.value() / r_c);
  }
  return over_users.value() / static_cast<double>(lists.size());
}

double cdcg(std::span<const RankedList> lists, const CategoryMatrix& cm, CategoryIndex c) {
  validate_lists(lists, cm, c);
  KahanSum over_users;
  for (const auto& l : lists) {
    KahanSum user_sum;
    for (std::size_t j = 0; j < l.items.size(); ++j) {
      user_sum.add(cm.frac(l.items[j], c) / log2_discount(j + 1));
    }
    over_users.add(user_sum.value() / static_cast<double>(l.items.size()));
  }
  return over_users.value() / static_cast<double>(lists.size());
}

double cmrr(std::span<const RankedList> lists, const CategoryMatrix& cm, CategoryIndex c) {
  validate_lists(lists, cm, c);
  KahanSum over_users;
  for (const auto& l : lists) {
    KahanSum user_sum;
    for (std::size_t j = 0; j < l.items.size(); ++j) {
      user_sum.add(cm.frac(l.items[j], c) / static_cast<double>(j + 1));
    }
    over_users.add(user_sum.value() / static_cast<double>(l.items.size()));
  }
  return over_users.value() / static_cast<double>(lists.size());
}

std::optional<double> crp(std::span<const RankedList> full_rankings,
                          const CategoryMatrix& cm, CategoryIndex c) {
  validate_lists(full_rankings, cm, c);
  // Tolerance-floored so that masses like 3 * (1/3) land on their integer.
  const auto k_c = static_cast<std::size_t>(
      std::max(0.0, std::floor(cm.catalog_mass[c] + 1e-9)));
  if (k_c == 0) return std::nullopt;
  KahanSum over_users;
  for (const auto& l : full_rankings) {
    KahanSum mass;
    const std::size_t depth = std::min(k_c, l.items.size());
    for (std::size_t j = 0; j < depth; ++j) mass.add(cm.frac(l.items[j], c));
    over_users.add(mass.value() / static_cast<double>(k_c));
  }
  return over_users.value() / static_cast<double>(full_rankings.size());
}

std::optional<double> compute_metric(MetricId id, std::span<const RankedList> lists,
                                     const CategoryMatrix& cm, CategoryIndex c) {
  switch (id) {
    case MetricId::CC: return category_coverage(lists, cm, c);
    case MetricId::RCR: return relative_category_representation(lists, cm, c);
    case MetricId::CMAP: return cmap(lists, cm, c);
    case MetricId::CDCG: return cdcg(lists, cm, c);
    case MetricId::CMRR: return cmrr(lists, cm, c);
    case MetricId::CRP: return crp(lists, cm, c);
  }
  throw std::invalid_argument("unknown metric id");
}

MetricReport gbs(MetricId id, std::span<const RankedList> lists_male,
                 std::span<const RankedList> lists_female, const CategoryMatrix& cm,
                 std::span<const CategoryIndex> categories) {
  if (lists_male.empty()) throw std::invalid_argument("male group has zero users");
  if (lists_female.empty()) throw std::invalid_argument("female group has zero users");

  MetricReport report;
  report.metric = id;
  KahanSum gbs_sum;
  for (CategoryIndex c : categories) {
    GroupCell cell;
    cell.category = c;
    const auto m = compute_metric(id, lists_male, cm, c);
    const auto f = compute_metric(id, lists_female, cm, c);
    if (!m.has_value() || !f.has_value()) {
      cell.defined = false;
      ++report.undefined_cells;
    } else {
      cell.male = *m;
      cell.female = *f;
      cell.delta = std::abs(*m - *f);
      gbs_sum.add(cell.delta);
    }
    report.cells.push_back(cell);
  }
  report.gbs = gbs_sum.value();
  return report;
}

namespace {

// Shared scaffolding: iterate lists whose user has at least one test item.
template <class PerUser>
double average_over_evaluable(std::span<const RankedList> lists,
                              const std::vector<std::vector<ItemIndex>>& test_items,
                              PerUser&& per_user) {
  if (lists.empty()) throw std::invalid_argument("no ranked lists given");
  KahanSum sum;
  std::size_t counted = 0;
  for (const auto& l : lists) {
    if (l.user >= test_items.size() || test_items[l.user].empty()) continue;
    sum.add(per_user(l, test_items[l.user]));
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("no user has test items");
  return sum.value() / static_cast<double>(counted);
}

bool is_test_item(const std::vector<ItemIndex>& sorted_test, ItemIndex v) {
  return std::binary_search(sorted_test.begin(), sorted_test.end(), v);
}

}  // namespace

double hit_ratio_at_k(std::span<const RankedList> lists,
                      const std::vector<std::vector<ItemIndex>>& test_items, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return average_over_evaluable(
      lists, test_items, [k](const RankedList& l, const std::vector<ItemIndex>& test) {
        const std::size_t depth = std::min<std::size_t>(k, l.items.size());
        for (std::size_t j = 0; j < depth; ++j) {
          if (is_test_item(test, l.items[j])) return 1.0;
        }
        return 0.0;
      });
}

double ndcg_at_k(std::span<const RankedList> lists,
                 const std::vector<std::vector<ItemIndex>>& test_items, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return average_over_evaluable(
      lists, test_items, [k](const RankedList& l, const std::vector<ItemIndex>& test) {
        const std::size_t depth = std::min<std::size_t>(k, l.items.size());
        double dcg = 0.0;
        for (std::size_t j = 0; j < depth; ++j) {
          if (is_test_item(test, l.items[j])) dcg += 1.0 / log2_discount(j + 1);
        }
        const std::size_t ideal = std::min<std::size_t>(k, test.size());
        double idcg = 0.0;
        for (std::size_t j = 0; j < ideal; ++j) idcg += 1.0 / log2_discount(j + 1);
        return idcg > 0.0 ? dcg / idcg : 0.0;
      });
}

double precision_at_k(std::span<const RankedList> lists,
                      const std::vector<std::vector<ItemIndex>>& test_items, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return average_over_evaluable(
      lists, test_items, [k](const RankedList& l, const std::vector<ItemIndex>& test) {
        const std::size_t depth = std::min<std::size_t>(k, l.items.size());
        int hits = 0;
        for (std::size_t j = 0; j < depth; ++j) {
          if (is_test_item(test, l.items[j])) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(k);
      });
}

}  // namespace fairrec::metrics
