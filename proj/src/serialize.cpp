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

#include "fairrec/serialize.hpp"

#include <fstream>

#include "fairrec/common.hpp"

namespace fairrec::serialize {
namespace {

constexpr int kFormatVersion = 1;

void require_version(const Json& j, const char* what) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kFormatVersion) {
    throw ConfigError(std::string(what) + ": unsupported or missing format_version");
  }
}

Json matrix_to_json(const Matrix& m) {
  return Json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const Json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw ConfigError("matrix size mismatch");
  return m;
}

}  // namespace

Json dataset_to_json(const Dataset& ds) {
  Json users = Json::array();
  for (const auto& u : ds.users) {
    users.push_back({{"id", u.id}, {"gender", u.gender == Gender::Male ? "M" : "F"}});
  }
  Json items = Json::array();
  for (const auto& it : ds.items) {
    items.push_back({{"id", it.id}, {"categories", it.categories}});
  }
  Json inter = Json::array();
  for (const auto& x : ds.interactions) {
    inter.push_back({x.user, x.item, x.rating, x.timestamp});
  }
  return Json{{"format_version", kFormatVersion},
              {"category_vocabulary", ds.category_vocabulary},
              {"users", users},
              {"items", items},
              {"interactions", inter}};
}

Dataset dataset_from_json(const Json& j) {
  require_version(j, "dataset");
  Dataset ds;
  ds.category_vocabulary = j.at("category_vocabulary").get<std::vector<std::string>>();
  for (const auto& u : j.at("users")) {
    const auto gender = u.at("gender").get<std::string>();
    if (gender != "M" && gender != "F") throw ConfigError("dataset: bad gender token");
    ds.user_index.emplace(u.at("id").get<std::string>(),
                          static_cast<UserIndex>(ds.users.size()));
    ds.users.push_back(
        {u.at("id").get<std::string>(), gender == "M" ? Gender::Male : Gender::Female});
  }
  for (const auto& it : j.at("items")) {
    ItemRecord rec{it.at("id").get<std::string>(),
                   it.at("categories").get<std::vector<CategoryIndex>>()};
    for (CategoryIndex c : rec.categories) {
      if (c >= ds.category_vocabulary.size()) throw ConfigError("dataset: bad category index");
    }
    ds.item_index.emplace(rec.id, static_cast<ItemIndex>(ds.items.size()));
    ds.items.push_back(std::move(rec));
  }
  for (const auto& x : j.at("interactions")) {
    Interaction it{x.at(0).get<UserIndex>(), x.at(1).get<ItemIndex>(),
                   x.at(2).get<double>(), x.at(3).get<std::int64_t>()};
    if (it.user >= ds.users.size() || it.item >= ds.items.size()) {
      throw ConfigError("dataset: interaction index out of range");
    }
    ds.interactions.push_back(it);
  }
  return ds;
}

namespace {
Json interactions_to_json(const std::vector<Interaction>& v) {
  Json out = Json::array();
  for (const auto& x : v) out.push_back({x.user, x.item, x.rating, x.timestamp});
  return out;
}
std::vector<Interaction> interactions_from_json(const Json& j) {
  std::vector<Interaction> out;
  for (const auto& x : j) {
    out.push_back({x.at(0).get<UserIndex>(), x.at(1).get<ItemIndex>(), x.at(2).get<double>(),
                   x.at(3).get<std::int64_t>()});
  }
  return out;
}
}  // namespace

Json split_to_json(const SplitDataset& split) {
  return Json{{"format_version", kFormatVersion},
              {"seed", split.seed},
              {"train", interactions_to_json(split.train)},
              {"validation", interactions_to_json(split.validation)},
              {"test", interactions_to_json(split.test)}};
}

SplitDataset split_from_json(const Json& j) {
  require_version(j, "split");
  SplitDataset s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train = interactions_from_json(j.at("train"));
  s.validation = interactions_from_json(j.at("validation"));
  s.test = interactions_from_json(j.at("test"));
  return s;
}

Json mf_model_to_json(const rec::MfModel& model) {
  return Json{{"format_version", kFormatVersion},
              {"kind", "mf"},
              {"d", model.d},
              {"user_factors", matrix_to_json(model.user_factors)},
              {"item_factors", matrix_to_json(model.item_factors)},
              {"user_bias", model.user_bias},
              {"item_bias", model.item_bias},
              {"global_bias", model.global_bias}};
}

rec::MfModel mf_model_from_json(const Json& j) {
  require_version(j, "mf model");
  rec::MfModel m;
  m.d = j.at("d").get<int>();
  m.user_factors = matrix_from_json(j.at("user_factors"));
  m.item_factors = matrix_from_json(j.at("item_factors"));
  m.user_bias = j.at("user_bias").get<std::vector<double>>();
  m.item_bias = j.at("item_bias").get<std::vector<double>>();
  m.global_bias = j.at("global_bias").get<double>();
  return m;
}

Json knn_model_to_json(const rec::KnnModel& model) {
  Json neighbors = Json::array();
  for (const auto& row : model.neighbors) {
    Json r = Json::array();
    for (const auto& [idx, sim] : row) r.push_back({idx, sim});
    neighbors.push_back(std::move(r));
  }
  Json user_items = Json::array();
  Json user_ratings = Json::array();
  for (std::size_t u = 0; u < model.train.num_users; ++u) {
    user_items.push_back(model.train.user_items[u]);
    user_ratings.push_back(model.train.user_ratings[u]);
  }
  return Json{{"format_version", kFormatVersion},
              {"kind", "knn"},
              {"mode", model.mode == rec::KnnMode::UserBased ? "user" : "item"},
              {"neighborhood_size", model.neighborhood_size},
              {"num_users", model.train.num_users},
              {"num_items", model.train.num_items},
              {"neighbors", neighbors},
              {"neighbor_norm", model.neighbor_norm},
              {"user_items", user_items},
              {"user_ratings", user_ratings}};
}

rec::KnnModel knn_model_from_json(const Json& j) {
  require_version(j, "knn model");
  rec::KnnModel m;
  m.mode = j.at("mode").get<std::string>() == "user" ? rec::KnnMode::UserBased
                                                     : rec::KnnMode::ItemBased;
  m.neighborhood_size = j.at("neighborhood_size").get<int>();
  for (const auto& row : j.at("neighbors")) {
    std::vector<std::pair<std::uint32_t, double>> r;
    for (const auto& entry : row) {
      r.emplace_back(entry.at(0).get<std::uint32_t>(), entry.at(1).get<double>());
    }
    m.neighbors.push_back(std::move(r));
  }
  m.neighbor_norm = j.at("neighbor_norm").get<std::vector<double>>();

  const auto num_users = j.at("num_users").get<std::size_t>();
  const auto num_items = j.at("num_items").get<std::size_t>();
  std::vector<Interaction> interactions;
  const auto& items = j.at("user_items");
  const auto& ratings = j.at("user_ratings");
  for (std::size_t u = 0; u < items.size(); ++u) {
    const auto row = items[u].get<std::vector<ItemIndex>>();
    const auto rrow = ratings[u].get<std::vector<double>>();
    for (std::size_t i = 0; i < row.size(); ++i) {
      interactions.push_back({static_cast<UserIndex>(u), row[i], rrow[i], -1});
    }
  }
  m.train = rec::InteractionMatrix::build(num_users, num_items, interactions);
  return m;
}

Json fairness_report_to_json(const metrics::FairnessReport& report) {
  Json metrics_json = Json::array();
  for (const auto& mr : report.metrics) {
    Json cells = Json::array();
    for (const auto& c : mr.cells) {
      cells.push_back({{"category", c.category},
                       {"male", c.male},
                       {"female", c.female},
                       {"delta", c.delta},
                       {"defined", c.defined}});
    }
    metrics_json.push_back({{"metric", metrics::metric_name(mr.metric)},
                            {"gbs", mr.gbs},
                            {"undefined_cells", mr.undefined_cells},
                            {"cells", cells}});
  }
  Json perf = Json::object();
  for (const auto& [name, by_k] : report.performance) {
    Json inner = Json::object();
    for (const auto& [k, v] : by_k) inner[std::to_string(k)] = v;
    perf[name] = inner;
  }
  return Json{{"format_version", report.format_version},
              {"dataset", report.dataset_name},
              {"model", report.model_name},
              {"seed", report.seed},
              {"k", report.k},
              {"category_names", report.category_names},
              {"metrics", metrics_json},
              {"performance", perf}};
}

metrics::FairnessReport fairness_report_from_json(const Json& j) {
  metrics::FairnessReport r;
  r.format_version = j.at("format_version").get<int>();
  r.dataset_name = j.at("dataset").get<std::string>();
  r.model_name = j.at("model").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.k = j.at("k").get<int>();
  r.category_names = j.at("category_names").get<std::vector<std::string>>();
  for (const auto& mj : j.at("metrics")) {
    metrics::MetricReport mr;
    mr.metric = metrics::metric_from_name(mj.at("metric").get<std::string>());
    mr.gbs = mj.at("gbs").get<double>();
    mr.undefined_cells = mj.at("undefined_cells").get<int>();
    for (const auto& cj : mj.at("cells")) {
      metrics::GroupCell c;
      c.category = cj.at("category").get<CategoryIndex>();
      c.male = cj.at("male").get<double>();
      c.female = cj.at("female").get<double>();
      c.delta = cj.at("delta").get<double>();
      c.defined = cj.at("defined").get<bool>();
      mr.cells.push_back(c);
    }
    r.metrics.push_back(std::move(mr));
  }
  for (const auto& [name, inner] : j.at("performance").items()) {
    for (const auto& [k, v] : inner.items()) {
      r.performance[name][std::stoi(k)] = v.get<double>();
    }
  }
  return r;
}

Json fair_train_config_to_json(const fair::FairTrainConfig& c) {
  return Json{{"alpha", c.alpha},
              {"k", c.k},
              {"temperature", c.temperature},
              {"sigmoid_center", c.sigmoid_center},
              {"sigmoid_scale", c.sigmoid_scale},
              {"regularizer", fair::regularizer_name(c.regularizer)},
              {"early_stopping",
               {{"monitor_k", c.early_stopping.monitor_k},
                {"min_delta", c.early_stopping.min_delta},
                {"patience", c.early_stopping.patience},
                {"max_epochs", c.early_stopping.max_epochs}}}};
}

fair::FairTrainConfig fair_train_config_from_json(const Json& j) {
  fair::FairTrainConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.k = j.value("k", c.k);
  c.temperature = j.value("temperature", c.temperature);
  c.sigmoid_center = j.value("sigmoid_center", c.sigmoid_center);
  c.sigmoid_scale = j.value("sigmoid_scale", c.sigmoid_scale);
  if (j.contains("regularizer")) {
    c.regularizer = fair::regularizer_from_name(j.at("regularizer").get<std::string>());
  }
  if (j.contains("early_stopping")) {
    const auto& e = j.at("early_stopping");
    c.early_stopping.monitor_k = e.value("monitor_k", c.early_stopping.monitor_k);
    c.early_stopping.min_delta = e.value("min_delta", c.early_stopping.min_delta);
    c.early_stopping.patience = e.value("patience", c.early_stopping.patience);
    c.early_stopping.max_epochs = e.value("max_epochs", c.early_stopping.max_epochs);
  }
  return c;
}

namespace {

Json mf_config_to_json(const rec::MfConfig& c) {
  return Json{{"d", c.d},
              {"learning_rate", c.learning_rate},
              {"l2", c.l2},
              {"negatives_per_positive", c.negatives_per_positive},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed}};
}

rec::MfConfig mf_config_from_json(const Json& j) {
  rec::MfConfig c;
  c.d = j.value("d", c.d);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.l2 = j.value("l2", c.l2);
  c.negatives_per_positive = j.value("negatives_per_positive", c.negatives_per_positive);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

Json synthetic_to_json(const exp::SyntheticConfig& c) {
  return Json{{"num_users", c.num_users},
              {"num_items", c.num_items},
              {"num_categories", c.num_categories},
              {"interactions_per_user", c.interactions_per_user},
              {"stereotype_strength", c.stereotype_strength},
              {"seed", c.seed}};
}

exp::SyntheticConfig synthetic_from_json(const Json& j) {
  exp::SyntheticConfig c;
  c.num_users = j.value("num_users", c.num_users);
  c.num_items = j.value("num_items", c.num_items);
  c.num_categories = j.value("num_categories", c.num_categories);
  c.interactions_per_user = j.value("interactions_per_user", c.interactions_per_user);
  c.stereotype_strength = j.value("stereotype_strength", c.stereotype_strength);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

Json experiment_config_to_json(const exp::ExperimentConfig& config) {
  Json models = Json::array();
  for (const auto& m : config.models) {
    Json mj{{"name", m.name},
            {"type", m.type},
            {"neighborhood_size", m.neighborhood_size},
            {"mf", mf_config_to_json(m.mf)}};
    if (m.fair.has_value()) mj["fair"] = fair_train_config_to_json(*m.fair);
    models.push_back(std::move(mj));
  }
  return Json{
      {"format_version", kFormatVersion},
      {"dataset",
       {{"format", config.dataset.format},
        {"name", config.dataset.name},
        {"data_dir", config.dataset.data_dir.string()},
        {"interactions", config.dataset.interactions.string()},
        {"users", config.dataset.users.string()},
        {"categories", config.dataset.categories.string()},
        {"synthetic", synthetic_to_json(config.dataset.synthetic)},
        {"min_interactions", config.dataset.min_interactions}}},
      {"split",
       {{"ratios", config.split.ratios}, {"seed", config.split.seed}}},
      {"models", models},
      {"evaluation",
       {{"k_list", config.evaluation.k_list},
        {"fairness_k", config.evaluation.fairness_k},
        {"categories", config.evaluation.categories}}},
      {"output",
       {{"directory", config.output.directory.string()},
        {"overwrite", config.output.overwrite}}}};
}

exp::ExperimentConfig experiment_config_from_json(const Json& j) {
  require_version(j, "experiment config");
  exp::ExperimentConfig c;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset.format = d.value("format", c.dataset.format);
    c.dataset.name = d.value("name", std::string{});
    c.dataset.data_dir = d.value("data_dir", std::string{});
    c.dataset.interactions = d.value("interactions", std::string{});
    c.dataset.users = d.value("users", std::string{});
    c.dataset.categories = d.value("categories", std::string{});
    if (d.contains("synthetic")) c.dataset.synthetic = synthetic_from_json(d.at("synthetic"));
    c.dataset.min_interactions = d.value("min_interactions", c.dataset.min_interactions);
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    if (s.contains("ratios")) c.split.ratios = s.at("ratios").get<std::array<double, 3>>();
    c.split.seed = s.value("seed", c.split.seed);
  }
  for (const auto& mj : j.value("models", Json::array())) {
    exp::ModelConfig m;
    m.name = mj.at("name").get<std::string>();
    m.type = mj.value("type", m.type);
    m.neighborhood_size = mj.value("neighborhood_size", m.neighborhood_size);
    if (mj.contains("mf")) m.mf = mf_config_from_json(mj.at("mf"));
    if (mj.contains("fair")) {
      auto f = fair_train_config_from_json(mj.at("fair"));
      f.mf = m.mf;
      m.fair = f;
    }
    c.models.push_back(std::move(m));
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    if (e.contains("k_list")) c.evaluation.k_list = e.at("k_list").get<std::vector<int>>();
    c.evaluation.fairness_k = e.value("fairness_k", c.evaluation.fairness_k);
    if (e.contains("categories")) {
      c.evaluation.categories = e.at("categories").get<std::vector<std::string>>();
    }
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    c.output.directory = o.value("directory", std::string{});
    c.output.overwrite = o.value("overwrite", false);
  }
  return c;
}

Json report_bundle_to_json(const exp::ReportBundle& bundle) {
  Json models = Json::array();
  for (const auto& m : bundle.models) {
    Json log = Json::array();
    for (const auto& e : m.training_log) {
      log.push_back({{"epoch", e.epoch},
                     {"rec_loss", e.rec_loss},
                     {"fair_loss_raw", e.fair_loss_raw},
                     {"fair_loss_modulated", e.fair_loss_modulated},
                     {"combined_loss", e.combined_loss},
                     {"val_ndcg20", e.val_ndcg20}});
    }
    models.push_back({{"model_name", m.model_name},
                      {"failed", m.failed},
                      {"failure_reason", m.failure_reason},
                      {"fairness", fairness_report_to_json(m.fairness)},
                      {"training_log", log},
                      {"best_epoch", m.best_epoch},
                      {"stopped_epoch", m.stopped_epoch}});
  }
  return Json{{"format_version", bundle.format_version},
              {"toolkit_version", bundle.toolkit_version},
              {"dataset_name", bundle.dataset_name},
              {"config", experiment_config_to_json(bundle.config)},
              {"models", models},
              {"timings", bundle.timings}};
}

exp::ReportBundle report_bundle_from_json(const Json& j) {
  exp::ReportBundle b;
  b.format_version = j.at("format_version").get<int>();
  b.toolkit_version = j.at("toolkit_version").get<std::string>();
  b.dataset_name = j.at("dataset_name").get<std::string>();
  b.config = experiment_config_from_json(j.at("config"));
  for (const auto& mj : j.at("models")) {
    exp::ModelReport m;
    m.model_name = mj.at("model_name").get<std::string>();
    m.failed = mj.at("failed").get<bool>();
    m.failure_reason = mj.at("failure_reason").get<std::string>();
    m.fairness = fairness_report_from_json(mj.at("fairness"));
    for (const auto& ej : mj.at("training_log")) {
      fair::EpochLog e;
      e.epoch = ej.at("epoch").get<int>();
      e.rec_loss = ej.at("rec_loss").get<double>();
      e.fair_loss_raw = ej.at("fair_loss_raw").get<double>();
      e.fair_loss_modulated = ej.at("fair_loss_modulated").get<double>();
      e.combined_loss = ej.at("combined_loss").get<double>();
      e.val_ndcg20 = ej.at("val_ndcg20").get<double>();
      m.training_log.push_back(e);
    }
    m.best_epoch = mj.at("best_epoch").get<int>();
    m.stopped_epoch = mj.at("stopped_epoch").get<int>();
    b.models.push_back(std::move(m));
  }
  b.timings = j.at("timings").get<std::map<std::string, double>>();
  return b;
}

void write_json(const Json& j, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + file.string());
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("write failed: " + file.string());
}

Json read_json(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + file.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return j;
}

}  // namespace fairrec::serialize
