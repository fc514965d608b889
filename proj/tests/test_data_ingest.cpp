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

#include <algorithm>
#include <set>

#include "fairrec/data_ingest.hpp"
#include "fairrec/serialize.hpp"
#include "testutil.hpp"

using namespace fairrec;
using namespace fairrec::ingest;
using testutil::TempDir;
using testutil::write_file;

namespace {

// Minimal format-valid ML-100K fixture writers.
std::string ml100k_item_line(int id, const std::string& title,
                             const std::vector<int>& genre_positions) {
  std::string flags;
  for (int g = 0; g < 19; ++g) {
    const bool on =
        std::find(genre_positions.begin(), genre_positions.end(), g) != genre_positions.end();
    flags += on ? "|1" : "|0";
  }
  return std::to_string(id) + "|" + title + "|01-Jan-1995||http://example.org" + flags;
}

void write_ml100k_fixture(const std::filesystem::path& dir) {
  // Genre flag positions: 1=Action, 8=Drama, 14=Romance (0 is "unknown").
  write_file(dir / "u.user",
             "1|24|M|technician|85711\n"
             "2|30|F|writer|12345\n"
             "3|41|M|engineer|00000\n");
  write_file(dir / "u.item", ml100k_item_line(1, "Alpha (1995)", {1}) + "\n" +
                                 ml100k_item_line(2, "Beta (1996)", {8, 14}) + "\n" +
                                 ml100k_item_line(3, "Gamma (1997)", {0}) + "\n");
  write_file(dir / "u.data",
             "1\t1\t5\t874965758\n"
             "1\t2\t3\t874965759\n"
             "2\t1\t4\t874965760\n"
             "3\t3\t2\t874965761\n");
}

RawDataset raw_from_dataset(const Dataset& ds) {
  RawDataset raw;
  raw.category_vocabulary = ds.category_vocabulary;
  for (const auto& u : ds.users) {
    raw.users.push_back({u.id, u.gender == Gender::Male ? 'M' : 'F'});
  }
  for (const auto& item : ds.items) {
    RawItem ri{item.id, {}};
    for (CategoryIndex c : item.categories) {
      ri.categories.push_back(ds.category_vocabulary[c]);
    }
    raw.items.push_back(std::move(ri));
  }
  for (const auto& it : ds.interactions) {
    raw.interactions.push_back(
        {ds.users[it.user].id, ds.items[it.item].id, it.rating, it.timestamp});
  }
  return raw;
}

}  // namespace

TEST_CASE("parse_ml100k on a format-valid fixture") {
  TempDir dir("ml100k");
  write_ml100k_fixture(dir.path());
  const auto raw = parse_ml100k(dir.path());
  CHECK(raw.users.size() == 3);
  CHECK(raw.items.size() == 3);
  CHECK(raw.interactions.size() == 4);
  REQUIRE(raw.category_vocabulary.size() == 18);  // "unknown" dropped
  CHECK(raw.category_vocabulary[0] == "Action");
  CHECK(raw.items[0].categories == std::vector<std::string>{"Action"});
  CHECK(raw.items[1].categories == std::vector<std::string>{"Drama", "Romance"});
  CHECK(raw.items[2].categories.empty());  // only the "unknown" flag was set
  CHECK(raw.interactions[0].user_id == "1");
  CHECK(raw.interactions[0].rating == 5.0);
  CHECK(raw.interactions[0].timestamp == 874965758);
}

TEST_CASE("parse_ml100k error paths") {
  TempDir dir("ml100k_err");
  write_ml100k_fixture(dir.path());

  SUBCASE("missing file") {
    std::filesystem::remove(dir.path() / "u.item");
    CHECK_THROWS_AS(parse_ml100k(dir.path()), IngestError);
  }
  SUBCASE("empty ratings file") {
    write_file(dir.path() / "u.data", "");
    CHECK_THROWS_WITH_AS(parse_ml100k(dir.path()),
                         doctest::Contains("no interactions"), IngestError);
  }
  SUBCASE("duplicate (user,item) pair is rejected with the line number") {
    write_file(dir.path() / "u.data",
               "1\t1\t5\t874965758\n"
               "2\t1\t4\t874965760\n"
               "1\t1\t3\t874965759\n");
    CHECK_THROWS_WITH_AS(parse_ml100k(dir.path()), doctest::Contains("u.data:3"),
                         IngestError);
  }
  SUBCASE("malformed row carries the line number") {
    write_file(dir.path() / "u.data", "1\t1\t5\t874965758\n1\t2\tbad\t874965800\n");
    CHECK_THROWS_WITH_AS(parse_ml100k(dir.path()), doctest::Contains(":2"), IngestError);
  }
  SUBCASE("bad gender token") {
    write_file(dir.path() / "u.user", "1|24|X|technician|85711\n");
    CHECK_THROWS_AS(parse_ml100k(dir.path()), IngestError);
  }
}

TEST_CASE("parse_ml100k on the real dataset" *
          doctest::skip(!testutil::ml100k_available())) {
  const auto raw = parse_ml100k(testutil::ml100k_dir());
  CHECK(raw.interactions.size() == 100000);
  CHECK(raw.users.size() == 943);
  CHECK(raw.items.size() == 1682);
  CHECK(raw.category_vocabulary.size() == 18);
}

TEST_CASE("parse_ml1m fixture") {
  TempDir dir("ml1m");
  write_file(dir.path() / "users.dat",
             "1::F::1::10::48067\n"
             "2::M::56::16::70072\n");
  write_file(dir.path() / "movies.dat",
             "1::Toy Story (1995)::Animation|Children's|Comedy\n"
             "1193::One Flew Over the Cuckoo's Nest (1975)::Drama\n"
             "2355::Movie::Action|Romance\n");
  write_file(dir.path() / "ratings.dat",
             "1::1193::5::978300760\n"
             "2::1::3::978300000\n"
             "2::2355::4::978300001\n");
  const auto raw = parse_ml1m(dir.path());
  CHECK(raw.users.size() == 2);
  CHECK(raw.users[0].gender == 'F');
  CHECK(raw.items.size() == 3);
  CHECK(raw.interactions.size() == 3);
  // row `1::1193::5::978300760`
  CHECK(raw.interactions[0].user_id == "1");
  CHECK(raw.interactions[0].item_id == "1193");
  CHECK(raw.interactions[0].rating == 5.0);
  CHECK(raw.interactions[0].timestamp == 978300760);
  // genre string `Action|Romance`
  CHECK(raw.items[2].categories == std::vector<std::string>{"Action", "Romance"});
  // vocabulary is the sorted union of seen genre names
  const std::vector<std::string> expect{"Action", "Animation", "Children's",
                                        "Comedy", "Drama", "Romance"};
  CHECK(raw.category_vocabulary == expect);
}

TEST_CASE("parse_generic_csv") {
  TempDir dir("csv");
  const auto inter = dir.path() / "interactions.csv";
  const auto users = dir.path() / "users.csv";
  const auto cats = dir.path() / "categories.csv";

  SUBCASE("2 users / 3 items / 6 interactions fixture") {
    write_file(users, "user_id,gender\nalice,F\nbob,M\n");
    write_file(cats,
               "item_id,category\ni1,Action\ni1,Romance\ni2,Drama\n");
    write_file(inter,
               "user_id,item_id,rating,timestamp\n"
               "alice,i1,5,1\nalice,i2,4,2\nalice,i3,3,3\n"
               "bob,i1,2,4\nbob,i2,1,5\nbob,i3,5,6\n");
    const auto raw = parse_generic_csv(inter, users, cats);
    CHECK(raw.users.size() == 2);
    CHECK(raw.items.size() == 3);
    CHECK(raw.interactions.size() == 6);
    CHECK(raw.items[0].categories == std::vector<std::string>{"Action", "Romance"});
    CHECK(raw.items[2].categories.empty());  // i3 absent from categories file
  }
  SUBCASE("rating-only header variant and CRLF") {
    write_file(users, "user_id,gender\r\nalice,F\r\nbob,unknown\r\n");
    write_file(cats, "item_id,category\r\ni1,\"Coffee, Tea & Desserts\"\r\n");
    write_file(inter, "user_id,item_id,rating\r\nalice,i1,5\r\n");
    const auto raw = parse_generic_csv(inter, users, cats);
    CHECK(raw.users[1].gender == 'U');
    CHECK(raw.items[0].categories ==
          std::vector<std::string>{"Coffee, Tea & Desserts"});
    CHECK(raw.interactions[0].timestamp == -1);
  }
  SUBCASE("interaction referencing an unknown user names it") {
    write_file(users, "user_id,gender\nalice,F\n");
    write_file(cats, "item_id,category\n");
    write_file(inter, "user_id,item_id,rating\nmallory,i1,5\n");
    CHECK_THROWS_WITH_AS(parse_generic_csv(inter, users, cats),
                         doctest::Contains("mallory"), IngestError);
  }
  SUBCASE("header mismatch") {
    write_file(users, "user,gender\nalice,F\n");
    write_file(cats, "item_id,category\n");
    write_file(inter, "user_id,item_id,rating\n");
    CHECK_THROWS_WITH_AS(parse_generic_csv(inter, users, cats),
                         doctest::Contains("header mismatch"), IngestError);
  }
  SUBCASE("bad gender token") {
    write_file(users, "user_id,gender\nalice,female\n");
    write_file(cats, "item_id,category\n");
    write_file(inter, "user_id,item_id,rating\n");
    CHECK_THROWS_WITH_AS(parse_generic_csv(inter, users, cats),
                         doctest::Contains("gender"), IngestError);
  }
}

TEST_CASE("filter_dataset") {
  SUBCASE("user below the interaction threshold is dropped") {
    RawDataset raw;
    raw.category_vocabulary = {"c"};
    for (int u = 0; u < 10; ++u) {
      raw.users.push_back({"u" + std::to_string(u), u % 2 == 0 ? 'M' : 'F'});
    }
    raw.users.push_back({"weak", 'M'});
    for (int i = 0; i < 6; ++i) raw.items.push_back({"i" + std::to_string(i), {"c"}});
    for (int u = 0; u < 10; ++u) {
      for (int i = 0; i < 6; ++i) {
        raw.interactions.push_back(
            {"u" + std::to_string(u), "i" + std::to_string(i), 5.0, -1});
      }
    }
    for (int i = 0; i < 4; ++i) {  // only 4 interactions
      raw.interactions.push_back({"weak", "i" + std::to_string(i), 4.0, -1});
    }
    const auto ds = filter_dataset(raw, 5);
    CHECK(ds.num_users() == 10);
    CHECK_FALSE(ds.user_index.count("weak"));
    CHECK(ds.interactions.size() == 60);
  }

  SUBCASE("item kept at raw count 5 but dropped once unknown genders leave") {
    RawDataset raw;
    raw.category_vocabulary = {"c"};
    for (int u = 0; u < 8; ++u) {
      raw.users.push_back({"k" + std::to_string(u), u % 2 == 0 ? 'M' : 'F'});
    }
    raw.users.push_back({"x1", 'U'});
    raw.users.push_back({"x2", 'U'});
    for (int i = 0; i < 6; ++i) raw.items.push_back({"i" + std::to_string(i), {"c"}});
    for (int u = 0; u < 8; ++u) {
      for (int i = 0; i < 5; ++i) {
        raw.interactions.push_back(
            {"k" + std::to_string(u), "i" + std::to_string(i), 5.0, -1});
      }
    }
    // item i5: 5 raw interactions, two from unknown-gender users
    for (const auto* u : {"k0", "k1", "k2", "x1", "x2"}) {
      raw.interactions.push_back({u, "i5", 5.0, -1});
    }
    const auto ds = filter_dataset(raw, 5);
    CHECK_FALSE(ds.item_index.count("i5"));
    CHECK(ds.num_items() == 5);
    CHECK(ds.num_users() == 8);
  }

  SUBCASE("empty result is an error") {
    RawDataset raw;
    raw.users.push_back({"u0", 'M'});
    raw.items.push_back({"i0", {}});
    raw.interactions.push_back({"u0", "i0", 5.0, -1});
    CHECK_THROWS_WITH_AS(filter_dataset(raw, 5),
                         doctest::Contains("empty after filtering"), IngestError);
  }

  SUBCASE("filtering is idempotent on a representative fixture") {
    RawDataset raw;
    raw.category_vocabulary = {"c", "d"};
    for (int u = 0; u < 12; ++u) {
      raw.users.push_back({"u" + std::to_string(u), u % 3 == 2 ? 'U' : (u % 2 ? 'F' : 'M')});
    }
    for (int i = 0; i < 8; ++i) {
      raw.items.push_back({"i" + std::to_string(i), {i % 2 ? "c" : "d"}});
    }
    Rng rng(5);
    for (int u = 0; u < 12; ++u) {
      for (int i = 0; i < 8; ++i) {
        if (rng.next_unit() < 0.8) {
          raw.interactions.push_back(
              {"u" + std::to_string(u), "i" + std::to_string(i), 3.0, -1});
        }
      }
    }
    const auto once = filter_dataset(raw, 5);
    const auto twice = filter_dataset(raw_from_dataset(once), 5);
    CHECK(once == twice);
  }

  SUBCASE("real ML-100K post-filter counts match the reference"
          * doctest::skip(!testutil::ml100k_available())) {
    const auto ds = filter_dataset(parse_ml100k(testutil::ml100k_dir()), 5);
    CHECK(ds.num_users() == 943);
    CHECK(std::abs(static_cast<double>(ds.interactions.size()) - 99287.0) / 99287.0 <= 0.01);
    CHECK(std::abs(static_cast<double>(ds.num_items()) - 1349.0) / 1349.0 <= 0.03);
  }
}

TEST_CASE("split_dataset") {
  // 12 users; user u has 5 + u interactions over a 30-item catalog.
  RawDataset raw;
  raw.category_vocabulary = {"c"};
  for (int i = 0; i < 30; ++i) raw.items.push_back({"i" + std::to_string(i), {"c"}});
  for (int u = 0; u < 12; ++u) {
    raw.users.push_back({"u" + std::to_string(u), u % 2 ? 'F' : 'M'});
    for (int i = 0; i < 5 + u; ++i) {
      raw.interactions.push_back({"u" + std::to_string(u), "i" + std::to_string(i), 4.0, -1});
    }
  }
  const auto ds = filter_dataset(raw, 1);

  SUBCASE("10 interactions split 7/1/2") {
    const UserIndex u = ds.user_index.at("u5");  // 5 + 5 = 10 interactions
    const auto split = split_dataset(ds, {0.7, 0.1, 0.2}, 42);
    const auto count = [&](const std::vector<Interaction>& v) {
      return std::count_if(v.begin(), v.end(),
                           [&](const Interaction& it) { return it.user == u; });
    };
    CHECK(count(split.train) == 7);
    CHECK(count(split.validation) == 1);
    CHECK(count(split.test) == 2);
  }
  SUBCASE("5 interactions: empty test share sends everything to train") {
    const UserIndex u = ds.user_index.at("u0");
    const auto split = split_dataset(ds, {0.7, 0.1, 0.2}, 42);
    const auto count = [&](const std::vector<Interaction>& v) {
      return std::count_if(v.begin(), v.end(),
                           [&](const Interaction& it) { return it.user == u; });
    };
    CHECK(count(split.train) == 5);
    CHECK(count(split.validation) == 0);
    CHECK(count(split.test) == 0);
  }
  SUBCASE("determinism and seed sensitivity") {
    const auto a = split_dataset(ds, {0.7, 0.1, 0.2}, 42);
    const auto b = split_dataset(ds, {0.7, 0.1, 0.2}, 42);
    CHECK(a == b);
    const auto c = split_dataset(ds, {0.7, 0.1, 0.2}, 43);
    CHECK(a != c);
  }
  SUBCASE("split partitions the interactions") {
    const auto split = split_dataset(ds, {0.7, 0.1, 0.2}, 7);
    std::multiset<std::pair<UserIndex, ItemIndex>> all, combined;
    for (const auto& it : ds.interactions) all.emplace(it.user, it.item);
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
      for (const auto& it : *part) combined.emplace(it.user, it.item);
    }
    CHECK(all == combined);
  }
  SUBCASE("every user appears in train") {
    const auto split = split_dataset(ds, {0.7, 0.1, 0.2}, 7);
    std::set<UserIndex> train_users;
    for (const auto& it : split.train) train_users.insert(it.user);
    CHECK(train_users.size() == ds.num_users());
  }
  SUBCASE("bad ratios rejected") {
    CHECK_THROWS_AS(split_dataset(ds, {0.7, 0.1, 0.1}, 42), std::invalid_argument);
  }
}

TEST_CASE("build_category_matrix") {
  SUBCASE("single and uniform splits") {
    auto ds = testutil::make_dataset(
        1, {{"Action"}, {"Action", "Romance", "Drama"}}, {"Action", "Drama", "Romance"});
    const auto cm = ingest::build_category_matrix(ds);
    CHECK(cm.frac(0, 0) == 1.0);
    CHECK(cm.frac(1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(cm.frac(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(cm.frac(1, 2) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("catalog mass hand evaluation") {
    auto ds = testutil::make_dataset(1, {{"c"}, {"c", "d"}, {"d"}}, {"c", "d"});
    const auto cm = ingest::build_category_matrix(ds);
    CHECK(cm.catalog_mass[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(cm.catalog_mass[1] == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("per-item fracs sum to one; total mass counts categorized items") {
    for (std::uint64_t seed : {3ull, 4ull, 5ull}) {
      const auto inst = testutil::random_instance(seed);
      std::size_t categorized = 0;
      for (std::size_t j = 0; j < inst.ds.num_items(); ++j) {
        if (inst.ds.items[j].categories.empty()) {
          CHECK(inst.cm.item_fracs[j].empty());
          continue;
        }
        ++categorized;
        double sum = 0.0;
        for (const auto& [c, f] : inst.cm.item_fracs[j]) sum += f;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
      double total = 0.0;
      for (double r : inst.cm.catalog_mass) total += r;
      CHECK(total == doctest::Approx(static_cast<double>(categorized)).epsilon(1e-9));
    }
  }
}

TEST_CASE("dataset and split JSON round-trip") {
  TempDir dir("json");
  write_ml100k_fixture(dir.path());
  const auto ds = filter_dataset(parse_ml100k(dir.path()), 1);
  const auto back = serialize::dataset_from_json(serialize::dataset_to_json(ds));
  CHECK(back == ds);

  const auto split = split_dataset(ds, {0.7, 0.1, 0.2}, 11);
  const auto split_back = serialize::split_from_json(serialize::split_to_json(split));
  CHECK(split_back == split);
}
