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

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fairrec/data_ingest.hpp"
#include "fairrec/rng.hpp"
#include "fairrec/types.hpp"

namespace testutil {

using namespace fairrec;

// Builds an index-mapped Dataset directly; genders alternate M,F,M,F,...
// item_cats[i] lists category names of item i drawn from vocab.
inline Dataset make_dataset(std::size_t num_users,
                            const std::vector<std::vector<std::string>>& item_cats,
                            const std::vector<std::string>& vocab) {
  Dataset ds;
  ds.category_vocabulary = vocab;
  std::map<std::string, CategoryIndex> cat_index;
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    cat_index.emplace(vocab[c], static_cast<CategoryIndex>(c));
  }
  for (std::size_t u = 0; u < num_users; ++u) {
    const std::string id = "u" + std::to_string(u);
    ds.user_index.emplace(id, static_cast<UserIndex>(u));
    ds.users.push_back({id, u % 2 == 0 ? Gender::Male : Gender::Female});
  }
  for (std::size_t i = 0; i < item_cats.size(); ++i) {
    ItemRecord rec;
    rec.id = "i" + std::to_string(i);
    for (const auto& name : item_cats[i]) rec.categories.push_back(cat_index.at(name));
    std::sort(rec.categories.begin(), rec.categories.end());
    ds.item_index.emplace(rec.id, static_cast<ItemIndex>(i));
    ds.items.push_back(std::move(rec));
  }
  return ds;
}

// Random small instance for oracle-equivalence checks: <= 10 users, <= 20
// items, <= 4 categories, K <= 5. Lists have no duplicates; full rankings are
// permutations of the catalog.
struct RandomInstance {
  Dataset ds;
  CategoryMatrix cm;
  std::vector<RankedList> lists;
  std::vector<RankedList> full;
};

inline RandomInstance random_instance(std::uint64_t seed, bool all_categorized = false) {
  Rng rng(seed);
  const int num_users = 1 + static_cast<int>(rng.below(10));
  const int num_items = 6 + static_cast<int>(rng.below(15));  // 6..20
  const int num_cats = 1 + static_cast<int>(rng.below(4));
  const int k = 1 + static_cast<int>(rng.below(5));

  std::vector<std::string> vocab;
  for (int c = 0; c < num_cats; ++c) vocab.push_back("c" + std::to_string(c));

  std::vector<std::vector<std::string>> item_cats(num_items);
  for (int i = 0; i < num_items; ++i) {
    for (int c = 0; c < num_cats; ++c) {
      if (rng.next_unit() < 0.45) item_cats[i].push_back(vocab[c]);
    }
    if (all_categorized && item_cats[i].empty()) {
      item_cats[i].push_back(vocab[rng.below(num_cats)]);
    }
  }

  RandomInstance inst;
  inst.ds = make_dataset(num_users, item_cats, vocab);
  inst.cm = ingest::build_category_matrix(inst.ds);
  for (int u = 0; u < num_users; ++u) {
    std::vector<ItemIndex> perm(num_items);
    for (int i = 0; i < num_items; ++i) perm[i] = static_cast<ItemIndex>(i);
    rng.shuffle(perm);
    inst.full.push_back({static_cast<UserIndex>(u), perm});
    perm.resize(k);
    inst.lists.push_back({static_cast<UserIndex>(u), perm});
  }
  return inst;
}

// Scratch directory fixture; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("fairrec_test_" + tag + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
  static inline int counter_ = 0;
};

inline void write_file(const std::filesystem::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary);
  out << content;
}

inline std::filesystem::path ml100k_dir() {
  if (const char* env = std::getenv("FAIRREC_ML100K_DIR")) return env;
  return std::filesystem::path(FAIRREC_SOURCE_DIR) / "data" / "ml-100k";
}

inline bool ml100k_available() {
  return std::filesystem::exists(ml100k_dir() / "u.data");
}

}  // namespace testutil
