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
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fairrec {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;
using CategoryIndex = std::uint16_t;

enum class Gender : std::uint8_t { Male, Female };

// One (user, item, rating) event in index space; timestamp -1 when absent.
struct Interaction {
  UserIndex user = 0;
  ItemIndex item = 0;
  double rating = 0.0;
  std::int64_t timestamp = -1;

  bool operator==(const Interaction&) const = default;
};

struct UserRecord {
  std::string id;
  Gender gender = Gender::Male;

  bool operator==(const UserRecord&) const = default;
};

struct ItemRecord {
  std::string id;
  std::vector<CategoryIndex> categories;  // sorted, unique; may be empty

  bool operator==(const ItemRecord&) const = default;
};

// Filtered, index-mapped dataset. Users/items keep the order they appear in
// the source files, so index order is reproducible across runs.
struct Dataset {
  std::vector<UserRecord> users;
  std::vector<ItemRecord> items;
  std::vector<Interaction> interactions;
  std::vector<std::string> category_vocabulary;
  std::unordered_map<std::string, UserIndex> user_index;
  std::unordered_map<std::string, ItemIndex> item_index;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }

  bool operator==(const Dataset&) const = default;
};

struct SplitDataset {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  std::uint64_t seed = 0;

  bool operator==(const SplitDataset&) const = default;
};

// Fractional category membership frac(j,c) = 1/|C_j| for c in C_j, plus the
// per-category catalog mass R_c = sum_j frac(j,c).
struct CategoryMatrix {
  std::size_t num_categories = 0;
  std::vector<std::vector<std::pair<CategoryIndex, double>>> item_fracs;
  std::vector<double> catalog_mass;

  double frac(ItemIndex item, CategoryIndex c) const {
    for (const auto& [cat, f] : item_fracs[item]) {
      if (cat == c) return f;
    }
    return 0.0;
  }
};

// Ordered recommendation list for one user; front() is rank 1.
struct RankedList {
  UserIndex user = 0;
  std::vector<ItemIndex> items;

  bool operator==(const RankedList&) const = default;
};

}  // namespace fairrec
