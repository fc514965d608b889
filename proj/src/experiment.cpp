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

#include "fairrec/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "fairrec/serialize.hpp"

namespace fairrec::exp {
namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path resolve_data_path(const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  if (const char* root = std::getenv("FAIRREC_DATA_ROOT")) {
    const fs::path rooted = fs::path(root) / p;
    if (fs::exists(rooted)) return rooted;
  }
  return p;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<CategoryIndex> resolve_categories(const Dataset& ds,
                                              const std::vector<std::string>& names) {
  std::vector<CategoryIndex> out;
  if (names.empty()) {
    out.resize(ds.category_vocabulary.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = static_cast<CategoryIndex>(c);
    return out;
  }
  for (const auto& name : names) {
    const auto it = std::find(ds.category_vocabulary.begin(), ds.category_vocabulary.end(),
                              name);
    if (it == ds.category_vocabulary.end()) {
      throw ConfigError("unknown category '" + name + "'");
    }
    out.push_back(static_cast<CategoryIndex>(it - ds.category_vocabulary.begin()));
  }
  return out;
}

}  // namespace

ingest::RawDataset generate_stereotyped_dataset(const SyntheticConfig& config) {
  if (config.num_users < 4 || config.num_items < 2 || config.num_categories < 2 ||
      config.interactions_per_user < 1 || config.stereotype_strength < 0.0 ||
      config.stereotype_strength > 1.0) {
    throw std::invalid_argument("invalid synthetic dataset config");
  }
  ingest::RawDataset raw;
  for (int c = 0; c < config.num_categories; ++c) {
    raw.category_vocabulary.push_back("genre_" + std::to_string(c));
  }
  char buf[32];
  for (int u = 0; u < config.num_users; ++u) {
    std::snprintf(buf, sizeof(buf), "u%04d", u);
    raw.users.push_back({buf, u % 2 == 0 ? 'M' : 'F'});  // alternate genders
  }
  std::vector<int> even_items, odd_items;
  for (int v = 0; v < config.num_items; ++v) {
    std::snprintf(buf, sizeof(buf), "i%04d", v);
    const int cat = v % config.num_categories;
    raw.items.push_back({buf, {raw.category_vocabulary[cat]}});
    (cat % 2 == 0 ? even_items : odd_items).push_back(v);
  }

  Rng rng(config.seed);
  for (int u = 0; u < config.num_users; ++u) {
    const bool male = u % 2 == 0;
    // Preferred pool: even categories for male users, odd for female.
    std::vector<int> preferred = male ? even_items : odd_items;
    std::vector<int> other = male ? odd_items : even_items;
    for (int t = 0; t < config.interactions_per_user; ++t) {
      const bool want_preferred = rng.next_unit() < config.stereotype_strength;
      std::vector<int>* pool = want_preferred ? &preferred : &other;
      if (pool->empty()) pool = want_preferred ? &other : &preferred;
      if (pool->empty()) break;  // user has rated everything
      const std::size_t pick = rng.below(pool->size());
      const int v = (*pool)[pick];
      (*pool)[pick] = pool->back();
      pool->pop_back();
      const bool is_preferred = (v % config.num_categories) % 2 == (male ? 0 : 1);
      const double rating = is_preferred ? 4.0 + static_cast<double>(rng.below(2))
                                         : 1.0 + static_cast<double>(rng.below(3));
      raw.interactions.push_back({raw.users[u].id, raw.items[v].id, rating, -1});
    }
  }
  return raw;
}

ingest::RawDataset load_raw(const DatasetConfig& config) {
  if (config.format == "ml100k") {
    return ingest::parse_ml100k(resolve_data_path(config.data_dir));
  }
  if (config.format == "ml1m") {
    return ingest::parse_ml1m(resolve_data_path(config.data_dir));
  }
  if (config.format == "csv") {
    return ingest::parse_generic_csv(resolve_data_path(config.interactions),
                                     resolve_data_path(config.users),
                                     resolve_data_path(config.categories));
  }
  if (config.format == "synthetic") {
    return generate_stereotyped_dataset(config.synthetic);
  }
  throw ConfigError("unknown dataset format '" + config.format + "'");
}

Prepared prepare(const ExperimentConfig& config) {
  Prepared prep;
  const auto raw = load_raw(config.dataset);
  prep.dataset = ingest::filter_dataset(raw, config.dataset.min_interactions);
  prep.cm = ingest::build_category_matrix(prep.dataset);
  prep.split = ingest::split_dataset(prep.dataset, config.split.ratios, config.split.seed);
  prep.train = rec::InteractionMatrix::build(prep.dataset.num_users(),
                                             prep.dataset.num_items(), prep.split.train);
  const std::size_t n = prep.dataset.num_users();
  prep.validation_items.resize(n);
  prep.test_items.resize(n);
  for (const auto& it : prep.split.validation) prep.validation_items[it.user].push_back(it.item);
  for (const auto& it : prep.split.test) prep.test_items[it.user].push_back(it.item);
  for (auto& v : prep.validation_items) std::sort(v.begin(), v.end());
  for (auto& v : prep.test_items) std::sort(v.begin(), v.end());

  prep.genders.reserve(n);
  for (const auto& u : prep.dataset.users) prep.genders.push_back(u.gender);

  prep.exclusions.resize(n);
  for (UserIndex u = 0; u < n; ++u) {
    auto& ex = prep.exclusions[u];
    ex = prep.train.user_items[u];
    ex.insert(ex.end(), prep.validation_items[u].begin(), prep.validation_items[u].end());
    std::sort(ex.begin(), ex.end());
  }
  return prep;
}

AnyModel fit_model(const Prepared& prep, const ModelConfig& mc, ModelReport* report) {
  if (mc.type == "UserKNN") {
    return rec::fit_userknn(prep.train, mc.neighborhood_size);
  }
  if (mc.type == "ItemKNN") {
    return rec::fit_itemknn(prep.train, mc.neighborhood_size);
  }
  if (mc.type == "MF") {
    if (mc.fair.has_value()) {
      fair::FairTrainConfig fc = *mc.fair;
      fc.mf = mc.mf;
      const auto result = fair::train_fair(prep.train, prep.validation_items, prep.genders,
                                           prep.cm, fc);
      if (report != nullptr) {
        report->training_log = result.log;
        report->best_epoch = result.best_epoch;
        report->stopped_epoch = result.stopped_epoch;
      }
      return result.model;
    }
    return rec::fit_mf_bpr(prep.train, mc.mf);
  }
  throw ConfigError("unknown model type '" + mc.type + "'");
}

RankedList model_full_ranking(const AnyModel& model, UserIndex user,
                              std::span<const ItemIndex> exclusions) {
  return std::visit(
      [&](const auto& m) { return rec::full_ranking(m, user, exclusions); }, model);
}

metrics::FairnessReport evaluate_model(const Prepared& prep, const AnyModel& model,
                                       const EvalConfig& eval,
                                       const std::string& dataset_name,
                                       const std::string& model_name, std::uint64_t seed) {
  const auto categories = resolve_categories(prep.dataset, eval.categories);

  // Full rankings once per test user; K-lists are prefixes of them.
  std::vector<RankedList> full_all, full_male, full_female;
  std::vector<RankedList> k_male, k_female;
  const int k = eval.fairness_k;
  for (UserIndex u = 0; u < prep.dataset.num_users(); ++u) {
    if (prep.test_items[u].empty()) continue;
    RankedList full = model_full_ranking(model, u, prep.exclusions[u]);
    RankedList prefix{
        u, {full.items.begin(),
            full.items.begin() + std::min<std::size_t>(k, full.items.size())}};
    if (prep.genders[u] == Gender::Male) {
      k_male.push_back(std::move(prefix));
      full_male.push_back(full);
    } else {
      k_female.push_back(std::move(prefix));
      full_female.push_back(full);
    }
    full_all.push_back(std::move(full));
  }

  metrics::FairnessReport fr;
  fr.dataset_name = dataset_name;
  fr.model_name = model_name;
  fr.seed = seed;
  fr.k = k;
  for (CategoryIndex c : categories) {
    fr.category_names.push_back(prep.dataset.category_vocabulary[c]);
  }
  for (metrics::MetricId id : metrics::kAllMetrics) {
    const bool needs_full = id == metrics::MetricId::CRP;
    fr.metrics.push_back(metrics::gbs(id, needs_full ? full_male : k_male,
                                      needs_full ? full_female : k_female, prep.cm,
                                      categories));
  }
  for (int kk : eval.k_list) {
    fr.performance["hit_ratio"][kk] = metrics::hit_ratio_at_k(full_all, prep.test_items, kk);
    fr.performance["ndcg"][kk] = metrics::ndcg_at_k(full_all, prep.test_items, kk);
    fr.performance["precision"][kk] =
        metrics::precision_at_k(full_all, prep.test_items, kk);
  }
  return fr;
}

ReportBundle run_experiment(const ExperimentConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  if (config.models.empty()) throw ConfigError("experiment config has no models");

  ReportBundle bundle;
  bundle.toolkit_version = kToolkitVersion;
  bundle.config = config;
  bundle.dataset_name =
      config.dataset.name.empty() ? config.dataset.format : config.dataset.name;

  const auto t_prep = std::chrono::steady_clock::now();
  const Prepared prep = prepare(config);
  bundle.timings["prepare_seconds"] = seconds_since(t_prep);

  for (const auto& mc : config.models) {
    ModelReport report;
    report.model_name = mc.name.empty() ? mc.type : mc.name;
    const auto t_model = std::chrono::steady_clock::now();
    try {
      const AnyModel model = fit_model(prep, mc, &report);
      bundle.timings[report.model_name + "_train_seconds"] = seconds_since(t_model);
      report.fairness = evaluate_model(prep, model, config.evaluation, bundle.dataset_name,
                                       report.model_name, config.split.seed);
    } catch (const std::exception& e) {
      report.failed = true;
      report.failure_reason = e.what();
    }
    bundle.timings[report.model_name + "_total_seconds"] = seconds_since(t_model);
    bundle.models.push_back(std::move(report));
  }
  bundle.timings["experiment_seconds"] = seconds_since(t_start);

  if (!config.output.directory.empty()) {
    emit_report(bundle, config.output.directory, config.output.overwrite);
  }
  return bundle;
}

std::pair<std::vector<UserIndex>, std::vector<UserIndex>> balanced_group_sample(
    std::span<const UserIndex> males, std::span<const UserIndex> females,
    std::uint64_t seed) {
  if (males.empty()) throw std::invalid_argument("male group is empty");
  if (females.empty()) throw std::invalid_argument("female group is empty");
  const std::size_t target = std::min(males.size(), females.size());
  const auto sample = [&](std::span<const UserIndex> group) {
    std::vector<UserIndex> out{group.begin(), group.end()};
    if (out.size() > target) {
      Rng rng(seed);
      rng.shuffle(out);
      out.resize(target);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  return {sample(males), sample(females)};
}

GenreProportionResult genre_proportion_analysis(const Prepared& prep, const AnyModel& model,
                                                std::span<const std::string> category_names,
                                                int k, std::uint64_t sample_seed) {
  std::vector<UserIndex> males, females;
  for (UserIndex u = 0; u < prep.dataset.num_users(); ++u) {
    if (prep.test_items[u].empty()) continue;
    (prep.genders[u] == Gender::Male ? males : females).push_back(u);
  }
  const auto [sample_m, sample_f] = balanced_group_sample(males, females, sample_seed);

  const auto lists_for = [&](const std::vector<UserIndex>& users) {
    std::vector<RankedList> lists;
    lists.reserve(users.size());
    for (UserIndex u : users) {
      RankedList full = model_full_ranking(model, u, prep.exclusions[u]);
      full.items.resize(std::min<std::size_t>(k, full.items.size()));
      lists.push_back(std::move(full));
    }
    return lists;
  };
  const auto lists_m = lists_for(sample_m);
  const auto lists_f = lists_for(sample_f);

  GenreProportionResult res;
  res.k = k;
  res.users_per_group = sample_m.size();
  for (const auto& name : category_names) {
    const auto cats = resolve_categories(prep.dataset, {name});
    res.categories.push_back(name);
    res.cc_male.push_back(metrics::category_coverage(lists_m, prep.cm, cats[0]));
    res.cc_female.push_back(metrics::category_coverage(lists_f, prep.cm, cats[0]));
  }
  res.precision_male = metrics::precision_at_k(lists_m, prep.test_items, k);
  res.precision_female = metrics::precision_at_k(lists_f, prep.test_items, k);
  return res;
}

std::vector<AlphaSweepRow> alpha_sweep(const ExperimentConfig& config,
                                       std::span<const double> alphas) {
  const Prepared prep = prepare(config);
  const ModelConfig* target = nullptr;
  for (const auto& mc : config.models) {
    if (mc.type == "MF" && mc.fair.has_value()) {
      target = &mc;
      break;
    }
  }
  if (target == nullptr) throw ConfigError("alpha sweep needs an MF model with a fair config");

  const auto categories = resolve_categories(prep.dataset, config.evaluation.categories);
  std::vector<AlphaSweepRow> rows;
  for (double alpha : alphas) {
    AlphaSweepRow row;
    row.alpha = alpha;
    try {
      fair::FairTrainConfig fc = *target->fair;
      fc.mf = target->mf;
      fc.alpha = alpha;
      const auto result = fair::train_fair(prep.train, prep.validation_items, prep.genders,
                                           prep.cm, fc);
      std::vector<RankedList> lists, lists_m, lists_f;
      for (UserIndex u = 0; u < prep.dataset.num_users(); ++u) {
        if (prep.test_items[u].empty()) continue;
        RankedList l = rec::top_k(result.model, u, 50, prep.exclusions[u]);
        (prep.genders[u] == Gender::Male ? lists_m : lists_f).push_back(l);
        lists.push_back(std::move(l));
      }
      row.ndcg50 = metrics::ndcg_at_k(lists, prep.test_items, 50);
      row.gbs_cc =
          metrics::gbs(metrics::MetricId::CC, lists_m, lists_f, prep.cm, categories).gbs;
    } catch (const std::exception& e) {
      row.failed = true;
      row.failure_reason = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void write_lines(const fs::path& file, const std::vector<std::string>& lines) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + file.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw ConfigError("write failed: " + file.string());
}

}  // namespace

void emit_report(const ReportBundle& bundle, const fs::path& directory, bool overwrite) {
  const fs::path bundle_file = directory / "bundle.json";
  if (fs::exists(bundle_file) && !overwrite) {
    throw ConfigError("refusing to overwrite existing report at " + bundle_file.string() +
                      " (pass overwrite)");
  }
  fs::create_directories(directory);
  serialize::write_json(serialize::report_bundle_to_json(bundle), bundle_file);

  const std::string seed_tag = "_seed" + std::to_string(bundle.config.split.seed);
  for (const auto& m : bundle.models) {
    if (m.failed) continue;
    const std::string stem = m.model_name + seed_tag;

    std::vector<std::string> cells{"metric,category,male,female,delta"};
    std::vector<std::string> gbs_rows{"metric,gbs"};
    for (const auto& mr : m.fairness.metrics) {
      for (std::size_t i = 0; i < mr.cells.size(); ++i) {
        const auto& c = mr.cells[i];
        const std::string cat = i < m.fairness.category_names.size()
                                    ? m.fairness.category_names[i]
                                    : std::to_string(c.category);
        if (c.defined) {
          cells.push_back(std::string(metrics::metric_name(mr.metric)) + "," + cat + "," +
                          format_double(c.male) + "," + format_double(c.female) + "," +
                          format_double(c.delta));
        } else {
          cells.push_back(std::string(metrics::metric_name(mr.metric)) + "," + cat +
                          ",undefined,undefined,undefined");
        }
      }
      gbs_rows.push_back(std::string(metrics::metric_name(mr.metric)) + "," +
                         format_double(mr.gbs));
    }
    write_lines(directory / (stem + "_cells.csv"), cells);
    write_lines(directory / (stem + "_gbs.csv"), gbs_rows);

    std::vector<std::string> perf{"metric,k,value"};
    for (const auto& [name, by_k] : m.fairness.performance) {
      for (const auto& [k, v] : by_k) {
        perf.push_back(name + "," + std::to_string(k) + "," + format_double(v));
      }
    }
    write_lines(directory / (stem + "_performance.csv"), perf);

    if (!m.training_log.empty()) {
      std::vector<std::string> log{
          "epoch,rec_loss,fair_loss_raw,fair_loss_modulated,combined_loss,val_ndcg20"};
      for (const auto& e : m.training_log) {
        log.push_back(std::to_string(e.epoch) + "," + format_double(e.rec_loss) + "," +
                      format_double(e.fair_loss_raw) + "," +
                      format_double(e.fair_loss_modulated) + "," +
                      format_double(e.combined_loss) + "," + format_double(e.val_ndcg20));
      }
      write_lines(directory / (stem + "_training_log.csv"), log);
    }
  }
}

void write_sweep_csv(std::span<const AlphaSweepRow> rows, const fs::path& file) {
  std::vector<std::string> lines{"alpha,ndcg50,gbs_cc"};
  for (const auto& r : rows) {
    if (r.failed) {
      lines.push_back(format_double(r.alpha) + ",failed,failed");
    } else {
      lines.push_back(format_double(r.alpha) + "," + format_double(r.ndcg50) + "," +
                      format_double(r.gbs_cc));
    }
  }
  write_lines(file, lines);
}

void write_figure_csv(const GenreProportionResult& result, const fs::path& proportions_file,
                      const fs::path& precision_file) {
  std::vector<std::string> lines{"category,cc_male,cc_female"};
  for (std::size_t i = 0; i < result.categories.size(); ++i) {
    lines.push_back(result.categories[i] + "," + format_double(result.cc_male[i]) + "," +
                    format_double(result.cc_female[i]));
  }
  write_lines(proportions_file, lines);
  write_lines(precision_file,
              {"group,precision_at_" + std::to_string(result.k),
               "male," + format_double(result.precision_male),
               "female," + format_double(result.precision_female)});
}

}  // namespace fairrec::exp
