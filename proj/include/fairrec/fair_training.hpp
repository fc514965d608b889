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

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairrec/recommenders.hpp"
#include "fairrec/types.hpp"

namespace fairrec::fair {

enum class Regularizer { GenreGender, BeyondParity, None };

const char* regularizer_name(Regularizer r);
Regularizer regularizer_from_name(const std::string& name);

struct EarlyStoppingConfig {
  int monitor_k = 20;       // NDCG@monitor_k on the validation split
  double min_delta = 0.0005;
  int patience = 10;
  int max_epochs = 50;

  bool operator==(const EarlyStoppingConfig&) const = default;
};

struct FairTrainConfig {
  rec::MfConfig mf;
  double alpha = 0.0;           // Eq-8 style trade-off, in [0, 1)
  int k = 50;                   // soft top-k size
  double temperature = 0.1;     // after per-user score standardization
  double sigmoid_center = 0.5;  // modulation: sigma((gbs - center) / scale)
  double sigmoid_scale = 0.1;
  Regularizer regularizer = Regularizer::GenreGender;
  EarlyStoppingConfig early_stopping;

  bool operator==(const FairTrainConfig&) const = default;
};

// --- Soft top-k ----------------------------------------------------------------

// Differentiable top-k memberships. Scores are standardized per user (zero
// mean, unit variance); the threshold is the midpoint of the k-th and
// (k+1)-th largest standardized scores and is treated as a constant for
// differentiation; membership is sigma((s~ - threshold) / tau).
struct SoftTopK {
  std::vector<double> membership;
  std::vector<double> standardized;
  double threshold = 0.0;
  double tau = 0.1;
  double mean = 0.0;
  double sigma = 1.0;          // sqrt(var + 1e-12)
  bool hard_fallback = false;  // fewer than k+1 candidates: memberships all 1

  double sum() const;
};

SoftTopK soft_topk_membership(std::span<const double> scores, int k, double tau,
                              bool* hard_fallback_warning = nullptr);

// Same construction applied to already-standardized scores (threshold and
// memberships only); used when the standardization is handled elsewhere.
SoftTopK soft_topk_from_standardized(std::vector<double> standardized, int k, double tau);

// Memberships plus the candidate items they refer to.
struct SoftUserLists {
  UserIndex user = 0;
  std::vector<ItemIndex> candidates;
  SoftTopK soft;
};

// Per-category soft coverage of one user: sum_v m_v frac(v,c) / sum_v m_v.
std::vector<double> soft_user_coverage(const SoftUserLists& user, const CategoryMatrix& cm);

// Group-level soft category coverage: the per-user ratio averaged over the
// group. Reduces exactly to category_coverage when memberships are hard.
double soft_category_coverage(std::span<const SoftUserLists> group, const CategoryMatrix& cm,
                              CategoryIndex c);

// --- Fairness losses -------------------------------------------------------------

struct GenreGenderLoss {
  double raw_gbs = 0.0;
  bool active = false;  // false when either gender is missing from the batch
  std::vector<double> cc_male;
  std::vector<double> cc_female;
};

// Soft GBS(CC) over the batch users' candidate scores (train items excluded).
// Returns raw_gbs = 0 and active = false when a gender is absent.
GenreGenderLoss fairness_loss_genre_gender(const rec::MfModel& model,
                                           const rec::InteractionMatrix& train,
                                           std::span<const UserIndex> males,
                                           std::span<const UserIndex> females,
                                           const CategoryMatrix& cm,
                                           const FairTrainConfig& config);

// max_batch_rec_loss * sigma((raw_gbs - center) / scale); the scale factor is
// a constant for differentiation.
double modulate_fairness_loss(double raw_gbs, double max_batch_rec_loss,
                              const FairTrainConfig& config);

// Eq-8 style combination.
double combined_loss(double alpha, double fair_term, double rec_term);

// One scored (user, item) pair for the BeyondParity comparator.
struct ScoredPair {
  UserIndex user = 0;
  ItemIndex item = 0;
  double prediction = 0.0;
  double rating = 0.0;
  Gender group = Gender::Male;
};

// U_val: mean over items rated by both groups of
// |(E_g[y] - E_g[r]) - (E_!g[y] - E_!g[r])|. Items with ratings from only one
// group are skipped and n adjusted; throws when no item qualifies.
double beyond_parity_uval(std::span<const ScoredPair> pairs);

// --- Training ----------------------------------------------------------------------

// Keras-style stopping: the checkpoint follows strict improvements, the
// patience counter resets only on improvements larger than min_delta.
class EarlyStopper {
 public:
  EarlyStopper(double min_delta, int patience)
      : min_delta_(min_delta), patience_(patience) {}

  // Feeds one epoch's monitored value; returns true when training should stop.
  bool update(double value) {
    improved_best_ = value > best_;
    if (improved_best_) best_ = value;
    if (value > significant_best_ + min_delta_) {
      significant_best_ = value;
      wait_ = 0;
    } else {
      ++wait_;
    }
    return wait_ >= patience_;
  }

  bool improved_best() const { return improved_best_; }
  double best() const { return best_; }

 private:
  double min_delta_;
  int patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  double significant_best_ = -std::numeric_limits<double>::infinity();
  int wait_ = 0;
  bool improved_best_ = false;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double rec_loss = 0.0;
  double fair_loss_raw = 0.0;
  double fair_loss_modulated = 0.0;
  double combined_loss = 0.0;
  double val_ndcg20 = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainStats {
  long skipped_positives = 0;
  long batches_without_both_genders = 0;
  long batches_without_shared_items = 0;  // BeyondParity: no co-rated item
  long hard_fallback_users = 0;
};

struct TrainResult {
  rec::MfModel model;  // best-validation checkpoint
  std::vector<EpochLog> log;
  int best_epoch = 0;     // epoch of the returned checkpoint
  int stopped_epoch = 0;  // last epoch that ran
  TrainStats stats;
};

// Fairness-regularized BPR training with early stopping on validation
// NDCG@monitor_k. validation_items is indexed by user; users with no
// validation items are ignored by the monitor. With alpha == 0 (or
// regularizer None) the parameter stream is bit-identical to fit_mf_bpr under
// the same seed.
TrainResult train_fair(const rec::InteractionMatrix& train,
                       const std::vector<std::vector<ItemIndex>>& validation_items,
                       std::span<const Gender> genders, const CategoryMatrix& cm,
                       const FairTrainConfig& config);

// NDCG@k of the model on held-out items, ranking all non-train items.
double validation_ndcg(const rec::MfModel& model, const rec::InteractionMatrix& train,
                       const std::vector<std::vector<ItemIndex>>& held_out, int k);

// --- Gradient verification -----------------------------------------------------------

// A loss with its analytic gradient, closed over fixed data. Quantities that
// are constants for differentiation (soft top-k thresholds, the max batch
// rec loss) are frozen at the model the probe was built with.
struct LossProbe {
  std::function<double(const rec::MfModel&)> loss;
  std::function<void(const rec::MfModel&, rec::MfGradient&)> grad;
};

LossProbe make_bpr_loss_probe(std::vector<rec::Triple> batch, double l2);

LossProbe make_combined_loss_probe(const rec::MfModel& base,
                                   const rec::InteractionMatrix& train,
                                   std::vector<rec::Triple> batch,
                                   std::vector<Gender> genders, const CategoryMatrix& cm,
                                   const FairTrainConfig& config);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of every model parameter. Relative error uses a
// unit floor: |a - n| / max(1, |a|, |n|).
GradCheckResult gradient_check(const rec::MfModel& model, const LossProbe& probe,
                               double epsilon = 1e-5);

}  // namespace fairrec::fair
