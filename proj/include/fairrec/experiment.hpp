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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fairrec/data_ingest.hpp"
#include "fairrec/fair_training.hpp"
#include "fairrec/metrics.hpp"
#include "fairrec/recommenders.hpp"
#include "fairrec/types.hpp"

namespace fairrec::exp {

// Built-in synthetic dataset with planted gender-stereotyped preferences:
// male users mostly interact with even-indexed categories, female users with
// odd-indexed ones, with the given strength.
struct SyntheticConfig {
  int num_users = 60;
  int num_items = 40;
  int num_categories = 2;
  int interactions_per_user = 20;
  double stereotype_strength = 0.9;
  std::uint64_t seed = 7;

  bool operator==(const SyntheticConfig&) const = default;
};

struct DatasetConfig {
  std::string format = "ml100k";  // ml100k | ml1m | csv | synthetic
  std::string name;               // report label; defaults to format
  std::filesystem::path data_dir; // ml100k / ml1m layouts
  std::filesystem::path interactions;  // csv format
  std::filesystem::path users;
  std::filesystem::path categories;
  SyntheticConfig synthetic;
  int min_interactions = 5;

  bool operator==(const DatasetConfig&) const = default;
};

struct SplitConfig {
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
  std::uint64_t seed = 42;

  bool operator==(const SplitConfig&) const = default;
};

struct ModelConfig {
  std::string name;
  std::string type = "MF";  // UserKNN | ItemKNN | MF
  int neighborhood_size = 50;
  rec::MfConfig mf;
  std::optional<fair::FairTrainConfig> fair;  // MF only; train_fair when present

  bool operator==(const ModelConfig&) const = default;
};

struct EvalConfig {
  std::vector<int> k_list{10, 20, 50};
  int fairness_k = 50;                  // list size for all GBS metrics but CRP
  std::vector<std::string> categories;  // empty = whole vocabulary

  bool operator==(const EvalConfig&) const = default;
};

struct OutputConfig {
  std::filesystem::path directory;
  bool overwrite = false;

  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  SplitConfig split;
  std::vector<ModelConfig> models;
  EvalConfig evaluation;
  OutputConfig output;

  bool operator==(const ExperimentConfig&) const = default;
};

struct ModelReport {
  std::string model_name;
  bool failed = false;
  std::string failure_reason;
  metrics::FairnessReport fairness;
  std::vector<fair::EpochLog> training_log;
  int best_epoch = 0;
  int stopped_epoch = 0;

  bool operator==(const ModelReport&) const = default;
};

struct ReportBundle {
  int format_version = 1;
  std::string toolkit_version;
  std::string dataset_name;
  ExperimentConfig config;
  std::vector<ModelReport> models;
  std::map<std::string, double> timings;  // wall-clock seconds; not deterministic

  bool operator==(const ReportBundle&) const = default;
};

// Pipeline inputs shared by every command, derived deterministically from the
// config: filtered dataset, category matrix, split, CSR train matrix,
// per-user held-out sets and the train+validation exclusion lists.
struct Prepared {
  Dataset dataset;
  CategoryMatrix cm;
  SplitDataset split;
  rec::InteractionMatrix train;
  std::vector<std::vector<ItemIndex>> validation_items;
  std::vector<std::vector<ItemIndex>> test_items;
  std::vector<Gender> genders;
  std::vector<std::vector<ItemIndex>> exclusions;  // train + validation, sorted
};

ingest::RawDataset generate_stereotyped_dataset(const SyntheticConfig& config);
ingest::RawDataset load_raw(const DatasetConfig& config);
Prepared prepare(const ExperimentConfig& config);

using AnyModel = std::variant<rec::KnnModel, rec::MfModel>;

AnyModel fit_model(const Prepared& prep, const ModelConfig& mc, ModelReport* report);
RankedList model_full_ranking(const AnyModel& model, UserIndex user,
                              std::span<const ItemIndex> exclusions);

// Ranks test users (full rankings; K-lists are their prefixes), computes all
// six GBS metrics over gender groups and the performance metrics at each k.
metrics::FairnessReport evaluate_model(const Prepared& prep, const AnyModel& model,
                                       const EvalConfig& eval,
                                       const std::string& dataset_name,
                                       const std::string& model_name, std::uint64_t seed);

// Full pipeline: ingest, filter, split, train every configured model,
// evaluate all six GBS metrics (K = fairness_k, CRP on full rankings) over
// test users grouped by gender plus HitRatio/NDCG/Precision at each k.
// Reports are written to config.output.directory unless it is empty.
ReportBundle run_experiment(const ExperimentConfig& config);

// Equal-size gender groups: the smaller group is kept whole, the larger is
// subsampled uniformly with the given seed. Returns (males, females).
std::pair<std::vector<UserIndex>, std::vector<UserIndex>> balanced_group_sample(
    std::span<const UserIndex> males, std::span<const UserIndex> females,
    std::uint64_t seed);

struct GenreProportionResult {
  std::vector<std::string> categories;
  std::vector<double> cc_male;
  std::vector<double> cc_female;
  double precision_male = 0.0;
  double precision_female = 0.0;
  int k = 10;
  std::size_t users_per_group = 0;
};

// Balanced-group genre proportion analysis: top-k lists for equal-size gender
// samples of the test users, per-gender category coverage and Precision@k.
GenreProportionResult genre_proportion_analysis(const Prepared& prep, const AnyModel& model,
                                                std::span<const std::string> category_names,
                                                int k, std::uint64_t sample_seed);

struct AlphaSweepRow {
  double alpha = 0.0;
  double ndcg50 = 0.0;
  double gbs_cc = 0.0;
  bool failed = false;
  std::string failure_reason;
};

// Trains the first fair-configured MF model once per alpha (shared split and
// seed) and records test NDCG@50 and GBS(CC).
std::vector<AlphaSweepRow> alpha_sweep(const ExperimentConfig& config,
                                       std::span<const double> alphas);

inline constexpr double kDefaultSweepAlphas[] = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};

// Writes bundle.json plus per-model CSVs (cells, GBS summary, performance,
// training log). Refuses to overwrite an existing bundle unless allowed.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& directory,
                 bool overwrite);

void write_sweep_csv(std::span<const AlphaSweepRow> rows, const std::filesystem::path& file);
void write_figure_csv(const GenreProportionResult& result,
                      const std::filesystem::path& proportions_file,
                      const std::filesystem::path& precision_file);

}  // namespace fairrec::exp
