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

#include <cstdint>
#include <span>
#include <vector>

#include "fairrec/common.hpp"
#include "fairrec/rng.hpp"
#include "fairrec/types.hpp"

namespace fairrec::rec {

// Train interactions in CSR form, both orientations. Entries are implicit
// positives; original ratings ride along for the BeyondParity comparator.
struct InteractionMatrix {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::vector<ItemIndex>> user_items;  // sorted per user
  std::vector<std::vector<double>> user_ratings;   // parallel to user_items
  std::vector<std::vector<UserIndex>> item_users;  // sorted per item

  static InteractionMatrix build(std::size_t num_users, std::size_t num_items,
                                 std::span<const Interaction> interactions);

  bool has(UserIndex u, ItemIndex v) const;
  double rating(UserIndex u, ItemIndex v) const;  // 0 when absent
  std::size_t num_interactions() const;
};

// --- KNN ---------------------------------------------------------------------

enum class KnnMode { UserBased, ItemBased };

struct KnnModel {
  KnnMode mode = KnnMode::UserBased;
  int neighborhood_size = 50;
  // Per user (UserBased) or per item (ItemBased): (index, similarity) sorted
  // by similarity descending, index ascending; self excluded.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> neighbors;
  std::vector<double> neighbor_norm;  // sum of |sim| over each neighborhood
  InteractionMatrix train;
};

KnnModel fit_userknn(const InteractionMatrix& train, int neighborhood_size);
KnnModel fit_itemknn(const InteractionMatrix& train, int neighborhood_size);

// Scores every catalog item for one user (no exclusions applied here).
std::vector<double> knn_score(const KnnModel& model, UserIndex user);

// --- Matrix factorization with BPR ------------------------------------------

struct MfConfig {
  int d = 50;
  double learning_rate = 0.01;
  double l2 = 0.001;
  int negatives_per_positive = 1;
  int epochs = 20;
  int batch_size = 1;  // 1 = classic per-triple SGD
  std::uint64_t seed = 42;

  bool operator==(const MfConfig&) const = default;
};

struct MfModel {
  int d = 0;
  Matrix user_factors;             // num_users x d
  Matrix item_factors;             // num_items x d
  std::vector<double> user_bias;   // frozen at 0 under BPR
  std::vector<double> item_bias;
  double global_bias = 0.0;        // frozen at 0 under BPR

  double score(UserIndex u, ItemIndex v) const {
    return global_bias + user_bias[u] + item_bias[v] +
           dot(user_factors.row(u), item_factors.row(v));
  }
  std::size_t num_users() const { return user_factors.rows; }
  std::size_t num_items() const { return item_factors.rows; }

  bool operator==(const MfModel&) const = default;
};

// Dense gradient mirror of MfModel. Training clears only touched rows.
struct MfGradient {
  Matrix user_factors;
  Matrix item_factors;
  std::vector<double> user_bias;
  std::vector<double> item_bias;
  double global_bias = 0.0;

  explicit MfGradient(const MfModel& m)
      : user_factors(m.user_factors.rows, m.user_factors.cols),
        item_factors(m.item_factors.rows, m.item_factors.cols),
        user_bias(m.user_bias.size(), 0.0),
        item_bias(m.item_bias.size(), 0.0) {}
};

struct Triple {
  UserIndex user;
  ItemIndex pos;
  ItemIndex neg;
};

// Factors drawn uniformly from [-0.01, 0.01); biases start at zero.
MfModel init_mf(std::size_t num_users, std::size_t num_items, const MfConfig& config,
                Rng& rng);

// BPR loss of one triple: -ln sigma(x_uij) + l2 * (|p_u|^2 + |q_i|^2 +
// |q_j|^2 + b_i^2 + b_j^2), x_uij = score(u,i) - score(u,j). Global and user
// bias cancel in x_uij and carry no regularization.
double bpr_loss(const MfModel& model, const Triple& t, double l2);

// Adds d(bpr_loss)/d(params) * weight into grad. User bias and global bias
// gradients are structurally zero for BPR and left untouched.
void accumulate_bpr_gradient(const MfModel& model, const Triple& t, double l2,
                             double weight, MfGradient& grad);

// One SGD step on a single triple. Throws on non-finite gradients.
void bpr_step(MfModel& model, const Triple& t, double learning_rate, double l2);

// Epoch machinery shared by plain BPR fitting and the fairness-aware trainer
// so that the two produce bit-identical parameter streams.
std::vector<Triple> make_epoch_triples(const InteractionMatrix& train,
                                       const MfConfig& config, Rng& rng,
                                       long* skipped_positives);

// Applies grad scaled by -learning_rate to factors and item biases only
// (user/global bias frozen), then zeroes the touched gradient rows.
void apply_and_clear(MfModel& model, MfGradient& grad, double learning_rate,
                     std::span<const Triple> batch);

// Plain BPR training: per epoch, shuffled positives with uniform negative
// sampling (rejecting train positives), mean-gradient steps over batches of
// config.batch_size. No early stopping here.
MfModel fit_mf_bpr(const InteractionMatrix& train, const MfConfig& config,
                   long* skipped_positives = nullptr);

// --- Ranking -----------------------------------------------------------------

// Ranks candidates (catalog minus exclusions) by score descending, ties by
// ascending item index; returns the first min(k, #candidates).
RankedList top_k(std::span<const double> scores, UserIndex user, int k,
                 std::span<const ItemIndex> exclusions);

RankedList full_ranking(std::span<const double> scores, UserIndex user,
                        std::span<const ItemIndex> exclusions);

RankedList top_k(const MfModel& model, UserIndex user, int k,
                 std::span<const ItemIndex> exclusions);
RankedList top_k(const KnnModel& model, UserIndex user, int k,
                 std::span<const ItemIndex> exclusions);
RankedList full_ranking(const MfModel& model, UserIndex user,
                        std::span<const ItemIndex> exclusions);
RankedList full_ranking(const KnnModel& model, UserIndex user,
                        std::span<const ItemIndex> exclusions);

}  // namespace fairrec::rec
