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
#include <string>

#include <json.hpp>

#include "fairrec/experiment.hpp"
#include "fairrec/fair_training.hpp"
#include "fairrec/metrics.hpp"
#include "fairrec/recommenders.hpp"
#include "fairrec/types.hpp"

namespace fairrec::serialize {

using Json = nlohmann::ordered_json;

// All documents carry a "format_version" field and round-trip losslessly
// (doubles are emitted with shortest-exact representation).

Json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const Json& j);

Json split_to_json(const SplitDataset& split);
SplitDataset split_from_json(const Json& j);

Json mf_model_to_json(const rec::MfModel& model);
rec::MfModel mf_model_from_json(const Json& j);

Json knn_model_to_json(const rec::KnnModel& model);
rec::KnnModel knn_model_from_json(const Json& j);

Json fairness_report_to_json(const metrics::FairnessReport& report);
metrics::FairnessReport fairness_report_from_json(const Json& j);

Json experiment_config_to_json(const exp::ExperimentConfig& config);
exp::ExperimentConfig experiment_config_from_json(const Json& j);

Json report_bundle_to_json(const exp::ReportBundle& bundle);
exp::ReportBundle report_bundle_from_json(const Json& j);

Json fair_train_config_to_json(const fair::FairTrainConfig& config);
fair::FairTrainConfig fair_train_config_from_json(const Json& j);

// File helpers.
void write_json(const Json& j, const std::filesystem::path& file);
Json read_json(const std::filesystem::path& file);

}  // namespace fairrec::serialize
