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

#include "fairrec/data_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fairrec/common.hpp"
#include "fairrec/rng.hpp"

namespace fairrec::ingest {
namespace {

// Genre flag order of the ML-100K u.item file. The leading "unknown" flag is
// discarded during parsing, leaving the 18-name vocabulary.
const std::vector<std::string> kMl100kGenres = {
    "unknown",  "Action",    "Adventure", "Animation", "Children's",
    "Comedy",   "Crime",     "Documentary", "Drama",   "Fantasy",
    "Film-Noir", "Horror",   "Musical",   "Mystery",   "Romance",
    "Sci-Fi",   "Thriller",  "War",       "Western"};

[[noreturn]] void fail(const std::filesystem::path& file, std::size_t line,
                       const std::string& what) {
  throw IngestError(file.string() + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_or_throw(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestError("missing input file: " + file.string());
  return in;
}

// getline that tolerates CRLF endings.
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_str(const std::string& line, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
  return out;
}

// Minimal RFC-4180 field splitter; category names may contain commas.
std::vector<std::string> split_csv(const std::filesystem::path& file,
                                   std::size_t line_no, const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) fail(file, line_no, "unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

double parse_rating(const std::filesystem::path& file, std::size_t line_no,
                    const std::string& tok) {
  try {
    std::size_t used = 0;
    const double r = std::stod(tok, &used);
    if (used != tok.size() || !std::isfinite(r)) throw std::invalid_argument(tok);
    return r;
  } catch (const std::exception&) {
    fail(file, line_no, "bad rating value '" + tok + "'");
  }
}

std::int64_t parse_timestamp(const std::filesystem::path& file, std::size_t line_no,
                             const std::string& tok) {
  try {
    std::size_t used = 0;
    const long long t = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return t;
  } catch (const std::exception&) {
    fail(file, line_no, "bad timestamp value '" + tok + "'");
  }
}

// Shared duplicate-pair guard; duplicates corrupt the interaction counts the
// filters depend on, so they are rejected rather than merged.
class PairGuard {
 public:
  void check(const std::filesystem::path& file, std::size_t line_no,
             const std::string& user, const std::string& item) {
    if (!seen_.insert(user + '\x1f' + item).second) {
      fail(file, line_no, "duplicate (user,item) pair (" + user + "," + item + ")");
    }
  }

 private:
  std::unordered_set<std::string> seen_;
};

}  // namespace

RawDataset parse_ml100k(const std::filesystem::path& data_dir) {
  RawDataset raw;

  {
    const auto file = data_dir / "u.user";
    auto in = open_or_throw(file);
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split(line, '|');
      if (f.size() != 5) fail(file, line_no, "expected 5 fields, got " + std::to_string(f.size()));
      if (f[2] != "M" && f[2] != "F") fail(file, line_no, "bad gender token '" + f[2] + "'");
      raw.users.push_back({f[0], f[2][0]});
    }
  }

  {
    const auto file = data_dir / "u.item";
    auto in = open_or_throw(file);
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split(line, '|');
      if (f.size() != 5 + kMl100kGenres.size()) {
        fail(file, line_no, "expected 24 fields, got " + std::to_string(f.size()));
      }
      RawItem item;
      item.id = f[0];
      for (std::size_t g = 0; g < kMl100kGenres.size(); ++g) {
        const std::string& flag = f[5 + g];
        if (flag == "0") continue;
        if (flag != "1") fail(file, line_no, "bad genre flag '" + flag + "'");
        if (g == 0) continue;  // "unknown" flag dropped
        item.categories.push_back(kMl100kGenres[g]);
      }
      raw.items.push_back(std::move(item));
    }
  }

  {
    const auto file = data_dir / "u.data";
    auto in = open_or_throw(file);
    std::string line;
    std::size_t line_no = 0;
    PairGuard guard;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split(line, '\t');
      if (f.size() != 4) fail(file, line_no, "expected 4 fields, got " + std::to_string(f.size()));
      guard.check(file, line_no, f[0], f[1]);
      raw.interactions.push_back(
          {f[0], f[1], parse_rating(file, line_no, f[2]), parse_timestamp(file, line_no, f[3])});
    }
    if (raw.interactions.empty()) throw IngestError(file.string() + ": no interactions");
  }

  raw.category_vocabulary.assign(kMl100kGenres.begin() + 1, kMl100kGenres.end());
  return raw;
}

RawDataset parse_ml1m(const std::filesystem::path& data_dir) {
  RawDataset raw;
  std::set<std::string> vocab;

  {
    const auto file = data_dir / "users.dat";
    auto in = open_or_throw(file);
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_str(line, "::");
      if (f.size() != 5) fail(file, line_no, "expected 5 fields, got " + std::to_string(f.size()));
      if (f[1] != "M" && f[1] != "F") fail(file, line_no, "bad gender token '" + f[1] + "'");
      raw.users.push_back({f[0], f[1][0]});
    }
  }

  {
    const auto file = data_dir / "movies.dat";
    auto in = open_or_throw(file);
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_str(line, "::");
      if (f.size() != 3) fail(file, line_no, "expected 3 fields, got " + std::to_string(f.size()));
      RawItem item;
      item.id = f[0];
      if (!f[2].empty()) {
        for (auto& g : split(f[2], '|')) {
          if (g.empty()) fail(file, line_no, "empty genre name");
          vocab.insert(g);
          item.categories.push_back(std::move(g));
        }
      }
      raw.items.push_back(std::move(item));
    }
  }

  {
    const auto file = data_dir / "ratings.dat";
    auto in = open_or_throw(file);
    std::string line;
    std::size_t line_no = 0;
    PairGuard guard;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_str(line, "::");
      if (f.size() != 4) fail(file, line_no, "expected 4 fields, got " + std::to_string(f.size()));
      guard.check(file, line_no, f[0], f[1]);
      raw.interactions.push_back(
          {f[0], f[1], parse_rating(file, line_no, f[2]), parse_timestamp(file, line_no, f[3])});
    }
    if (raw.interactions.empty()) throw IngestError(file.string() + ": no interactions");
  }

  raw.category_vocabulary.assign(vocab.begin(), vocab.end());
  return raw;
}

RawDataset parse_generic_csv(const std::filesystem::path& interactions_path,
                             const std::filesystem::path& users_path,
                             const std::filesystem::path& categories_path) {
  RawDataset raw;
  std::unordered_set<std::string> known_users;
  std::unordered_map<std::string, std::size_t> item_pos;
  std::set<std::string> vocab;

  const auto expect_header = [](const std::filesystem::path& file, std::istream& in,
                                const std::vector<std::vector<std::string>>& accepted)
      -> std::size_t {
    std::string line;
    if (!next_line(in, line)) throw IngestError(file.string() + ": empty file");
    const auto got = split_csv(file, 1, line);
    for (std::size_t i = 0; i < accepted.size(); ++i) {
      if (got == accepted[i]) return i;
    }
    std::string want;
    for (const auto& alt : accepted) {
      if (!want.empty()) want += " or ";
      std::string h;
      for (const auto& c : alt) h += (h.empty() ? "" : ",") + c;
      want += "'" + h + "'";
    }
    throw IngestError(file.string() + ": header mismatch, expected " + want);
  };

  {
    auto in = open_or_throw(users_path);
    expect_header(users_path, in, {{"user_id", "gender"}});
    std::string line;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_csv(users_path, line_no, line);
      if (f.size() != 2) fail(users_path, line_no, "expected 2 fields");
      char g;
      if (f[1] == "M") {
        g = 'M';
      } else if (f[1] == "F") {
        g = 'F';
      } else if (f[1] == "unknown") {
        g = 'U';
      } else {
        fail(users_path, line_no, "bad gender token '" + f[1] + "'");
      }
      if (!known_users.insert(f[0]).second) fail(users_path, line_no, "duplicate user '" + f[0] + "'");
      raw.users.push_back({f[0], g});
    }
  }

  {
    auto in = open_or_throw(categories_path);
    expect_header(categories_path, in, {{"item_id", "category"}});
    std::string line;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_csv(categories_path, line_no, line);
      if (f.size() != 2) fail(categories_path, line_no, "expected 2 fields");
      if (f[1].empty()) fail(categories_path, line_no, "empty category name");
      auto [it, inserted] = item_pos.try_emplace(f[0], raw.items.size());
      if (inserted) raw.items.push_back({f[0], {}});
      auto& cats = raw.items[it->second].categories;
      if (std::find(cats.begin(), cats.end(), f[1]) == cats.end()) cats.push_back(f[1]);
      vocab.insert(f[1]);
    }
  }

  {
    auto in = open_or_throw(interactions_path);
    const std::size_t variant = expect_header(
        interactions_path, in,
        {{"user_id", "item_id", "rating"}, {"user_id", "item_id", "rating", "timestamp"}});
    const bool with_ts = variant == 1;
    std::string line;
    std::size_t line_no = 1;
    PairGuard guard;
    while (next_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_csv(interactions_path, line_no, line);
      if (f.size() != (with_ts ? 4u : 3u)) fail(interactions_path, line_no, "wrong field count");
      if (!known_users.count(f[0])) {
        fail(interactions_path, line_no, "interaction references unknown user '" + f[0] + "'");
      }
      guard.check(interactions_path, line_no, f[0], f[1]);
      RawInteraction ri{f[0], f[1], parse_rating(interactions_path, line_no, f[2]), -1};
      if (with_ts) ri.timestamp = parse_timestamp(interactions_path, line_no, f[3]);
      if (!item_pos.count(f[1])) {
        item_pos.emplace(f[1], raw.items.size());
        raw.items.push_back({f[1], {}});  // item without categories
      }
      raw.interactions.push_back(std::move(ri));
    }
    if (raw.interactions.empty()) {
      throw IngestError(interactions_path.string() + ": no interactions");
    }
  }

  raw.category_vocabulary.assign(vocab.begin(), vocab.end());
  return raw;
}

Dataset filter_dataset(const RawDataset& raw, int min_interactions) {
  if (min_interactions < 1) throw std::invalid_argument("min_interactions must be >= 1");

  // Step 1: unknown genders out.
  std::unordered_map<std::string, char> gender_of;
  gender_of.reserve(raw.users.size());
  for (const auto& u : raw.users) {
    if (u.gender == 'M' || u.gender == 'F') gender_of.emplace(u.id, u.gender);
  }

  std::vector<const RawInteraction*> live;
  live.reserve(raw.interactions.size());
  for (const auto& it : raw.interactions) {
    if (gender_of.count(it.user_id)) live.push_back(&it);
  }

  // Step 2: items below the interaction threshold out.
  std::unordered_map<std::string, int> item_count;
  for (const auto* it : live) ++item_count[it->item_id];
  std::unordered_set<std::string> kept_items;
  for (const auto& [id, n] : item_count) {
    if (n >= min_interactions) kept_items.insert(id);
  }
  std::erase_if(live, [&](const RawInteraction* it) { return !kept_items.count(it->item_id); });

  // Step 3: users below the threshold (after item removal) out.
  std::unordered_map<std::string, int> user_count;
  for (const auto* it : live) ++user_count[it->user_id];
  std::unordered_set<std::string> kept_users;
  for (const auto& [id, n] : user_count) {
    if (n >= min_interactions) kept_users.insert(id);
  }
  std::erase_if(live, [&](const RawInteraction* it) { return !kept_users.count(it->user_id); });

  if (live.empty()) throw IngestError("dataset empty after filtering");

  Dataset ds;
  ds.category_vocabulary = raw.category_vocabulary;
  std::unordered_map<std::string, CategoryIndex> cat_index;
  for (std::size_t c = 0; c < ds.category_vocabulary.size(); ++c) {
    cat_index.emplace(ds.category_vocabulary[c], static_cast<CategoryIndex>(c));
  }

  for (const auto& u : raw.users) {
    if (!kept_users.count(u.id)) continue;
    ds.user_index.emplace(u.id, static_cast<UserIndex>(ds.users.size()));
    ds.users.push_back({u.id, u.gender == 'M' ? Gender::Male : Gender::Female});
  }
  for (const auto& item : raw.items) {
    if (!kept_items.count(item.id)) continue;
    ItemRecord rec;
    rec.id = item.id;
    for (const auto& c : item.categories) {
      const auto it = cat_index.find(c);
      if (it == cat_index.end()) {
        throw IngestError("item '" + item.id + "' references category '" + c +
                          "' outside the vocabulary");
      }
      rec.categories.push_back(it->second);
    }
    std::sort(rec.categories.begin(), rec.categories.end());
    rec.categories.erase(std::unique(rec.categories.begin(), rec.categories.end()),
                         rec.categories.end());
    ds.item_index.emplace(rec.id, static_cast<ItemIndex>(ds.items.size()));
    ds.items.push_back(std::move(rec));
  }

  ds.interactions.reserve(live.size());
  for (const auto* it : live) {
    const auto u = ds.user_index.find(it->user_id);
    const auto v = ds.item_index.find(it->item_id);
    if (u == ds.user_index.end()) {
      throw IngestError("interaction references unknown user '" + it->user_id + "'");
    }
    if (v == ds.item_index.end()) {
      throw IngestError("interaction references unknown item '" + it->item_id + "'");
    }
    ds.interactions.push_back({u->second, v->second, it->rating, it->timestamp});
  }
  return ds;
}

SplitDataset split_dataset(const Dataset& ds, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1 (got " + std::to_string(sum) + ")");
  }
  for (double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split ratios must be nonnegative");
  }
  if (ratios[0] <= 0.0) throw std::invalid_argument("train ratio must be positive");

  std::vector<std::vector<std::size_t>> per_user(ds.num_users());
  for (std::size_t i = 0; i < ds.interactions.size(); ++i) {
    per_user[ds.interactions[i].user].push_back(i);
  }

  // ceil() with a nudge so exact integer products are not bumped up by
  // floating-point representation error.
  const auto fuzzy_ceil = [](double x) {
    return static_cast<std::size_t>(std::ceil(x - 1e-9));
  };

  SplitDataset out;
  out.seed = seed;
  for (UserIndex u = 0; u < ds.num_users(); ++u) {
    auto idx = per_user[u];
    if (idx.empty()) continue;
    Rng rng(mix64(seed, fnv1a(ds.users[u].id)));
    rng.shuffle(idx);

    const std::size_t n = idx.size();
    std::size_t n_train = std::min(fuzzy_ceil(ratios[0] * static_cast<double>(n)), n);
    std::size_t n_val =
        std::min(fuzzy_ceil(ratios[1] * static_cast<double>(n)), n - n_train);
    std::size_t n_test = n - n_train - n_val;
    if (n_test == 0) {
      n_train = n;
      n_val = 0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Interaction& it = ds.interactions[idx[i]];
      if (i < n_train) {
        out.train.push_back(it);
      } else if (i < n_train + n_val) {
        out.validation.push_back(it);
      } else {
        out.test.push_back(it);
      }
    }
  }
  return out;
}

CategoryMatrix build_category_matrix(const Dataset& ds) {
  CategoryMatrix cm;
  cm.num_categories = ds.category_vocabulary.size();
  cm.item_fracs.resize(ds.num_items());
  std::vector<KahanSum> mass(cm.num_categories);
  for (ItemIndex j = 0; j < ds.num_items(); ++j) {
    const auto& cats = ds.items[j].categories;
    if (cats.empty()) continue;
    const double f = 1.0 / static_cast<double>(cats.size());
    cm.item_fracs[j].reserve(cats.size());
    for (CategoryIndex c : cats) {
      cm.item_fracs[j].emplace_back(c, f);
      mass[c].add(f);
    }
  }
  cm.catalog_mass.resize(cm.num_categories);
  for (std::size_t c = 0; c < cm.num_categories; ++c) cm.catalog_mass[c] = mass[c].value();
  return cm;
}

}  // namespace fairrec::ingest
