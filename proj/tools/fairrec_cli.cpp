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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fairrec/experiment.hpp"
#include "fairrec/serialize.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fairrec;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool overwrite = false;
  std::string model_filter;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config JSON");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed, "override the split seed");
  cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
  cmd->add_flag("--overwrite", args.overwrite, "allow overwriting existing outputs");
  cmd->add_option("--model", args.model_filter, "only run the named model");
}

exp::ExperimentConfig load_config(const CommonArgs& args) {
  auto config = serialize::experiment_config_from_json(
      serialize::read_json(args.config_path));
  if (args.seed.has_value()) config.split.seed = *args.seed;
  if (!args.out_dir.empty()) config.output.directory = args.out_dir;
  if (args.overwrite) config.output.overwrite = true;
  if (!args.model_filter.empty()) {
    std::erase_if(config.models, [&](const exp::ModelConfig& m) {
      return m.name != args.model_filter;
    });
    if (config.models.empty()) {
      throw ConfigError("no model named '" + args.model_filter + "' in config");
    }
  }
  return config;
}

fs::path require_out(const exp::ExperimentConfig& config) {
  if (config.output.directory.empty()) {
    throw ConfigError("no output directory (set output.directory or pass --out)");
  }
  fs::create_directories(config.output.directory);
  return config.output.directory;
}

void guard_overwrite(const exp::ExperimentConfig& config, const fs::path& file) {
  if (fs::exists(file) && !config.output.overwrite) {
    throw ConfigError("refusing to overwrite " + file.string() + " (pass --overwrite)");
  }
}

int cmd_ingest(const CommonArgs& args) {
  const auto config = load_config(args);
  const auto out = require_out(config);
  const auto raw = exp::load_raw(config.dataset);
  const auto ds = ingest::filter_dataset(raw, config.dataset.min_interactions);
  const fs::path file = out / "dataset.json";
  guard_overwrite(config, file);
  serialize::write_json(serialize::dataset_to_json(ds), file);
  std::cout << "ingest: " << ds.num_users() << " users, " << ds.num_items() << " items, "
            << ds.interactions.size() << " interactions, "
            << ds.category_vocabulary.size() << " categories -> " << file << "\n";
  return 0;
}

int cmd_split(const CommonArgs& args) {
  const auto config = load_config(args);
  const auto out = require_out(config);
  const fs::path ds_file = out / "dataset.json";
  Dataset ds;
  if (fs::exists(ds_file)) {
    ds = serialize::dataset_from_json(serialize::read_json(ds_file));
  } else {
    ds = ingest::filter_dataset(exp::load_raw(config.dataset),
                                config.dataset.min_interactions);
    serialize::write_json(serialize::dataset_to_json(ds), ds_file);
  }
  const auto split = ingest::split_dataset(ds, config.split.ratios, config.split.seed);
  const fs::path file = out / "split.json";
  guard_overwrite(config, file);
  serialize::write_json(serialize::split_to_json(split), file);
  std::cout << "split: train " << split.train.size() << ", validation "
            << split.validation.size() << ", test " << split.test.size() << " -> " << file
            << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const auto config = load_config(args);
  const auto out = require_out(config);
  const auto prep = exp::prepare(config);
  for (const auto& mc : config.models) {
    exp::ModelReport report;
    report.model_name = mc.name.empty() ? mc.type : mc.name;
    const auto model = exp::fit_model(prep, mc, &report);
    const std::string stem =
        report.model_name + "_seed" + std::to_string(config.split.seed);
    const fs::path ckpt = out / (stem + "_checkpoint.json");
    guard_overwrite(config, ckpt);
    if (const auto* mf = std::get_if<rec::MfModel>(&model)) {
      serialize::write_json(serialize::mf_model_to_json(*mf), ckpt);
    } else {
      serialize::write_json(serialize::knn_model_to_json(std::get<rec::KnnModel>(model)),
                            ckpt);
    }
    if (!report.training_log.empty()) {
      std::ofstream log(out / (stem + "_training_log.csv"));
      log << "epoch,rec_loss,fair_loss_raw,fair_loss_modulated,combined_loss,val_ndcg20\n";
      for (const auto& e : report.training_log) {
        log << e.epoch << ',' << e.rec_loss << ',' << e.fair_loss_raw << ','
            << e.fair_loss_modulated << ',' << e.combined_loss << ',' << e.val_ndcg20
            << '\n';
      }
    }
    std::cout << "train: " << report.model_name << " -> " << ckpt << "\n";
  }
  return 0;
}

int cmd_run(const CommonArgs& args) {
  auto config = load_config(args);
  require_out(config);
  const auto bundle = exp::run_experiment(config);
  std::size_t failed = 0;
  for (const auto& m : bundle.models) {
    if (m.failed) {
      ++failed;
      std::cerr << "model " << m.model_name << " failed: " << m.failure_reason << "\n";
      continue;
    }
    std::cout << m.model_name << ":";
    for (const auto& mr : m.fairness.metrics) {
      std::cout << " GBS(" << metrics::metric_name(mr.metric) << ")=" << mr.gbs;
    }
    std::cout << "\n";
  }
  std::cout << "reports written to " << config.output.directory << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_evaluate(const CommonArgs& args) {
  // Evaluation from stored checkpoints; re-trains nothing.
  auto config = load_config(args);
  const auto out = require_out(config);
  const auto prep = exp::prepare(config);
  exp::ReportBundle bundle;
  bundle.toolkit_version = kToolkitVersion;
  bundle.config = config;
  bundle.dataset_name =
      config.dataset.name.empty() ? config.dataset.format : config.dataset.name;

  for (const auto& mc : config.models) {
    exp::ModelReport report;
    report.model_name = mc.name.empty() ? mc.type : mc.name;
    const fs::path ckpt =
        out / (report.model_name + "_seed" + std::to_string(config.split.seed) +
               "_checkpoint.json");
    try {
      const auto j = serialize::read_json(ckpt);
      exp::AnyModel model;
      if (j.at("kind").get<std::string>() == "mf") {
        model = serialize::mf_model_from_json(j);
      } else {
        model = serialize::knn_model_from_json(j);
      }
      report.fairness = exp::evaluate_model(prep, model, config.evaluation,
                                            bundle.dataset_name, report.model_name,
                                            config.split.seed);
    } catch (const std::exception& e) {
      report.failed = true;
      report.failure_reason = e.what();
    }
    bundle.models.push_back(std::move(report));
  }
  exp::emit_report(bundle, out, true);
  std::cout << "evaluate: reports written to " << out << "\n";
  bool any_failed = false;
  for (const auto& m : bundle.models) any_failed = any_failed || m.failed;
  return any_failed ? 1 : 0;
}

int cmd_sweep(const CommonArgs& args) {
  const auto config = load_config(args);
  const auto out = require_out(config);
  const fs::path file = out / "alpha_sweep.csv";
  guard_overwrite(config, file);
  const auto rows = exp::alpha_sweep(config, exp::kDefaultSweepAlphas);
  exp::write_sweep_csv(rows, file);
  for (const auto& r : rows) {
    if (r.failed) {
      std::cerr << "alpha " << r.alpha << " failed: " << r.failure_reason << "\n";
    } else {
      std::cout << "alpha " << r.alpha << ": ndcg50=" << r.ndcg50
                << " gbs_cc=" << r.gbs_cc << "\n";
    }
  }
  std::cout << "sweep written to " << file << "\n";
  return 0;
}

int cmd_figure1(const CommonArgs& args) {
  const auto config = load_config(args);
  const auto out = require_out(config);
  if (config.models.empty()) throw ConfigError("figure1 needs a model");
  const auto prep = exp::prepare(config);
  const auto& mc = config.models.front();
  exp::ModelReport report;
  const auto model = exp::fit_model(prep, mc, &report);
  std::vector<std::string> cats = config.evaluation.categories;
  if (cats.empty()) cats = prep.dataset.category_vocabulary;
  const auto result =
      exp::genre_proportion_analysis(prep, model, cats, 10, config.split.seed);
  const fs::path prop_file = out / "figure1_proportions.csv";
  const fs::path prec_file = out / "figure1_precision.csv";
  guard_overwrite(config, prop_file);
  exp::write_figure_csv(result, prop_file, prec_file);
  std::cout << "figure1: " << result.users_per_group
            << " users per group; precision@10 male=" << result.precision_male
            << " female=" << result.precision_female << " -> " << prop_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-aware gender-bias metrics and fairness-regularized training "
               "for recommenders"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* ingest_cmd = app.add_subcommand("ingest", "parse and filter a dataset");
  auto* split_cmd = app.add_subcommand("split", "build the train/validation/test split");
  auto* train_cmd = app.add_subcommand("train", "train configured models, save checkpoints");
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate stored checkpoints");
  auto* sweep_cmd = app.add_subcommand("sweep", "alpha sweep for the fair MF model");
  auto* fig_cmd = app.add_subcommand("figure1", "balanced-group genre proportion analysis");
  auto* run_cmd = app.add_subcommand("run", "full pipeline: ingest to reports");
  for (auto* cmd : {ingest_cmd, split_cmd, train_cmd, eval_cmd, sweep_cmd, fig_cmd, run_cmd}) {
    add_common(cmd, args);
  }

  CLI11_PARSE(app, argc, argv);

  const auto stage = [&]() -> const char* {
    if (ingest_cmd->parsed()) return "ingest";
    if (split_cmd->parsed()) return "split";
    if (train_cmd->parsed()) return "train";
    if (eval_cmd->parsed()) return "evaluate";
    if (sweep_cmd->parsed()) return "sweep";
    if (fig_cmd->parsed()) return "figure1";
    return "run";
  }();

  try {
    if (ingest_cmd->parsed()) return cmd_ingest(args);
    if (split_cmd->parsed()) return cmd_split(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (eval_cmd->parsed()) return cmd_evaluate(args);
    if (sweep_cmd->parsed()) return cmd_sweep(args);
    if (fig_cmd->parsed()) return cmd_figure1(args);
    return cmd_run(args);
  } catch (const std::exception& e) {
    std::cerr << "[" << stage << "] error: " << e.what() << "\n";
    return 1;
  }
}
