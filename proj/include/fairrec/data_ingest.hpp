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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairrec/types.hpp"

namespace fairrec::ingest {

// Pre-filter dataset straight out of the source files. Ids are still raw
// strings; genders may be unknown ('U') for generic CSV input.
struct RawUser {
  std::string id;
  char gender = 'U';  // 'M', 'F' or 'U'
};

struct RawItem {
  std::string id;
  std::vector<std::string> categories;
};

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::int64_t timestamp = -1;
};

struct RawDataset {
  std::vector<RawUser> users;
  std::vector<RawItem> items;
  std::vector<RawInteraction> interactions;
  std::vector<std::string> category_vocabulary;
};

// MovieLens 100K layout: u.data (tab separated), u.item (pipe separated with
// 19 trailing genre flags, the leading "unknown" flag is dropped), u.user.
RawDataset parse_ml100k(const std::filesystem::path& data_dir);

// MovieLens 1M layout: ratings.dat / users.dat / movies.dat with "::"
// separators; genres are |-separated names.
RawDataset parse_ml1m(const std::filesystem::path& data_dir);

// Three headered CSV files: user_id,item_id,rating[,timestamp];
// user_id,gender (M/F/unknown); item_id,category (one row per pair).
RawDataset parse_generic_csv(const std::filesystem::path& interactions_path,
                             const std::filesystem::path& users_path,
                             const std::filesystem::path& categories_path);

// Filtering pipeline, applied once in this order:
//   1. drop users with unknown gender (and their interactions),
//   2. drop items with fewer than min_interactions interactions,
//   3. drop users with fewer than min_interactions remaining interactions.
Dataset filter_dataset(const RawDataset& raw, int min_interactions = 5);

// Per-user random split. Each user's interactions are shuffled with a
// generator seeded by (seed, user id) and assigned ceil(r0*n) to train, then
// ceil(r1*n) of the remainder to validation, rest to test. Users whose test
// share would be empty keep everything in train.
SplitDataset split_dataset(const Dataset& ds, std::array<double, 3> ratios,
                           std::uint64_t seed);

CategoryMatrix build_category_matrix(const Dataset& ds);

}  // namespace fairrec::ingest
