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

#include "fairrec/recommenders.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fairrec::rec {

InteractionMatrix InteractionMatrix::build(std::size_t num_users, std::size_t num_items,
                                           std::span<const Interaction> interactions) {
  InteractionMatrix m;
  m.num_users = num_users;
  m.num_items = num_items;
  m.user_items.resize(num_users);
  m.user_ratings.resize(num_users);
  m.item_users.resize(num_items);

  // Sort per user by item index so membership queries can binary-search.
  std::vector<std::vector<std::pair<ItemIndex, double>>> tmp(num_users);
  for (const auto& it : interactions) {
    if (it.user >= num_users || it.item >= num_items) {
      throw std::invalid_argument("interaction index out of range");
    }
    tmp[it.user].emplace_back(it.item, it.rating);
  }
  for (UserIndex u = 0; u < num_users; ++u) {
    auto& row = tmp[u];
    std::sort(row.begin(), row.end());
    m.user_items[u].reserve(row.size());
    m.user_ratings[u].reserve(row.size());
    for (const auto& [v, r] : row) {
      m.user_items[u].push_back(v);
      m.user_ratings[u].push_back(r);
      m.item_users[v].push_back(u);
    }
  }
  for (auto& col : m.item_users) std::sort(col.begin(), col.end());
  return m;
}

bool InteractionMatrix::has(UserIndex u, ItemIndex v) const {
  const auto& row = user_items[u];
  return std::binary_search(row.begin(), row.end(), v);
}

double InteractionMatrix::rating(UserIndex u, ItemIndex v) const {
  const auto& row = user_items[u];
  const auto it = std::lower_bound(row.begin(), row.end(), v);
  if (it == row.end() || *it != v) return 0.0;
  return user_ratings[u][static_cast<std::size_t>(it - row.begin())];
}

std::size_t InteractionMatrix::num_interactions() const {
  std::size_t n = 0;
  for (const auto& row : user_items) n += row.size();
  return n;
}

namespace {

// Top-N selection of (index, sim) by sim descending, index ascending.
std::vector<std::pair<std::uint32_t, double>> select_neighbors(
    std::vector<std::pair<std::uint32_t, double>>& cands, int n) {
  const auto cmp = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  if (static_cast<int>(cands.size()) > n) {
    std::nth_element(cands.begin(), cands.begin() + n, cands.end(), cmp);
    cands.resize(n);
  }
  std::sort(cands.begin(), cands.end(), cmp);
  return cands;
}

// Cosine similarity neighborhoods over binary occupancy rows. `rows` maps
// each entity to the entities co-occurring with it through `cols`.
std::vector<std::vector<std::pair<std::uint32_t, double>>> cosine_neighbors(
    const std::vector<std::vector<std::uint32_t>>& entity_to_events,
    const std::vector<std::vector<std::uint32_t>>& event_to_entities,
    int neighborhood_size) {
  const std::size_t n = entity_to_events.size();
  std::vector<std::vector<std::pair<std::uint32_t, double>>> out(n);
  std::vector<int> overlap(n, 0);
  std::vector<std::uint32_t> touched;
  for (std::uint32_t a = 0; a < n; ++a) {
    if (entity_to_events[a].empty()) {
      throw std::invalid_argument("entity " + std::to_string(a) +
                                  " has no interactions; similarity undefined");
    }
    touched.clear();
    for (std::uint32_t ev : entity_to_events[a]) {
      for (std::uint32_t b : event_to_entities[ev]) {
        if (b == a) continue;
        if (overlap[b] == 0) touched.push_back(b);
        ++overlap[b];
      }
    }
    std::vector<std::pair<std::uint32_t, double>> cands;
    cands.reserve(touched.size());
    const double norm_a = std::sqrt(static_cast<double>(entity_to_events[a].size()));
    for (std::uint32_t b : touched) {
      const double norm_b = std::sqrt(static_cast<double>(entity_to_events[b].size()));
      cands.emplace_back(b, static_cast<double>(overlap[b]) / (norm_a * norm_b));
      overlap[b] = 0;
    }
    out[a] = select_neighbors(cands, neighborhood_size);
  }
  return out;
}

}  // namespace

KnnModel fit_userknn(const InteractionMatrix& train, int neighborhood_size) {
  if (neighborhood_size < 1) throw std::invalid_argument("neighborhood_size must be >= 1");
  KnnModel m;
  m.mode = KnnMode::UserBased;
  m.neighborhood_size = neighborhood_size;
  m.neighbors = cosine_neighbors(train.user_items, train.item_users,
                                 neighborhood_size);
  m.neighbor_norm.resize(m.neighbors.size(), 0.0);
  for (std::size_t i = 0; i < m.neighbors.size(); ++i) {
    for (const auto& [_, s] : m.neighbors[i]) m.neighbor_norm[i] += std::abs(s);
  }
  m.train = train;
  return m;
}

KnnModel fit_itemknn(const InteractionMatrix& train, int neighborhood_size) {
  if (neighborhood_size < 1) throw std::invalid_argument("neighborhood_size must be >= 1");
  KnnModel m;
  m.mode = KnnMode::ItemBased;
  m.neighborhood_size = neighborhood_size;
  // Items with zero train interactions cannot occur post-filter, but guard the
  // similarity pass the same way as the user-based variant.
  m.neighbors = cosine_neighbors(train.item_users, train.user_items,
                                 neighborhood_size);
  m.neighbor_norm.resize(m.neighbors.size(), 0.0);
  for (std::size_t i = 0; i < m.neighbors.size(); ++i) {
    for (const auto& [_, s] : m.neighbors[i]) m.neighbor_norm[i] += std::abs(s);
  }
  m.train = train;
  return m;
}

std::vector<double> knn_score(const KnnModel& model, UserIndex user) {
  if (user >= model.train.num_users) {
    throw std::invalid_argument("unknown user " + std::to_string(user));
  }
  std::vector<double> scores(model.train.num_items, 0.0);
  if (model.mode == KnnMode::UserBased) {
    const auto& nbrs = model.neighbors[user];
    const double denom = model.neighbor_norm[user];
    if (denom <= 0.0) return scores;
    for (const auto& [v, sim] : nbrs) {
      for (ItemIndex item : model.train.user_items[v]) scores[item] += sim;
    }
    for (double& s : scores) s /= denom;
  } else {
    // score(u,v) = sum_{v' in N(v), v' rated by u} sim(v,v') / sum_{v' in N(v)} |sim|
    const auto& mine = model.train.user_items[user];
    std::vector<char> rated(model.train.num_items, 0);
    for (ItemIndex v : mine) rated[v] = 1;
    for (ItemIndex v = 0; v < model.train.num_items; ++v) {
      const double denom = model.neighbor_norm[v];
      if (denom <= 0.0) continue;
      double acc = 0.0;
      for (const auto& [v2, sim] : model.neighbors[v]) {
        if (rated[v2]) acc += sim;
      }
      scores[v] = acc / denom;
    }
  }
  return scores;
}

MfModel init_mf(std::size_t num_users, std::size_t num_items, const MfConfig& config,
                Rng& rng) {
  if (config.d < 1) throw std::invalid_argument("latent dimension must be >= 1");
  MfModel m;
  m.d = config.d;
  m.user_factors = Matrix(num_users, config.d);
  m.item_factors = Matrix(num_items, config.d);
  m.user_bias.assign(num_users, 0.0);
  m.item_bias.assign(num_items, 0.0);
  for (double& x : m.user_factors.data) x = rng.next_symmetric(0.01);
  for (double& x : m.item_factors.data) x = rng.next_symmetric(0.01);
  return m;
}

double bpr_loss(const MfModel& model, const Triple& t, double l2) {
  const auto p = model.user_factors.row(t.user);
  const auto qi = model.item_factors.row(t.pos);
  const auto qj = model.item_factors.row(t.neg);
  const double x = model.item_bias[t.pos] - model.item_bias[t.neg] + dot(p, qi) - dot(p, qj);
  double reg = model.item_bias[t.pos] * model.item_bias[t.pos] +
               model.item_bias[t.neg] * model.item_bias[t.neg];
  for (std::size_t k = 0; k < p.size(); ++k) {
    reg += p[k] * p[k] + qi[k] * qi[k] + qj[k] * qj[k];
  }
  return softplus(-x) + l2 * reg;
}

void accumulate_bpr_gradient(const MfModel& model, const Triple& t, double l2,
                             double weight, MfGradient& grad) {
  const auto p = model.user_factors.row(t.user);
  const auto qi = model.item_factors.row(t.pos);
  const auto qj = model.item_factors.row(t.neg);
  const double x = model.item_bias[t.pos] - model.item_bias[t.neg] + dot(p, qi) - dot(p, qj);
  const double slope = -logistic(-x);  // d(-ln sigma(x))/dx

  auto gp = grad.user_factors.row(t.user);
  auto gqi = grad.item_factors.row(t.pos);
  auto gqj = grad.item_factors.row(t.neg);
  for (std::size_t k = 0; k < p.size(); ++k) {
    gp[k] += weight * (slope * (qi[k] - qj[k]) + 2.0 * l2 * p[k]);
    gqi[k] += weight * (slope * p[k] + 2.0 * l2 * qi[k]);
    gqj[k] += weight * (-slope * p[k] + 2.0 * l2 * qj[k]);
  }
  grad.item_bias[t.pos] += weight * (slope + 2.0 * l2 * model.item_bias[t.pos]);
  grad.item_bias[t.neg] += weight * (-slope + 2.0 * l2 * model.item_bias[t.neg]);
}

void bpr_step(MfModel& model, const Triple& t, double learning_rate, double l2) {
  MfGradient grad(model);
  accumulate_bpr_gradient(model, t, l2, 1.0, grad);
  const Triple batch[1] = {t};
  apply_and_clear(model, grad, learning_rate, batch);
}

std::vector<Triple> make_epoch_triples(const InteractionMatrix& train,
                                       const MfConfig& config, Rng& rng,
                                       long* skipped_positives) {
  // Deterministic order: positives are laid out (user, item) ascending, then
  // shuffled by the caller-provided stream.
  std::vector<std::pair<UserIndex, ItemIndex>> positives;
  positives.reserve(train.num_interactions());
  for (UserIndex u = 0; u < train.num_users; ++u) {
    for (ItemIndex v : train.user_items[u]) positives.emplace_back(u, v);
  }
  rng.shuffle(positives);

  std::vector<Triple> triples;
  triples.reserve(positives.size() * static_cast<std::size_t>(config.negatives_per_positive));
  for (const auto& [u, i] : positives) {
    if (train.user_items[u].size() >= train.num_items) {
      if (skipped_positives) ++(*skipped_positives);
      continue;  // user has every item; no negative exists
    }
    for (int s = 0; s < config.negatives_per_positive; ++s) {
      ItemIndex j;
      do {
        j = static_cast<ItemIndex>(rng.below(train.num_items));
      } while (train.has(u, j));
      triples.push_back({u, i, j});
    }
  }
  return triples;
}

void apply_and_clear(MfModel& model, MfGradient& grad, double learning_rate,
                     std::span<const Triple> batch) {
  const auto check = [&](double g, const Triple& t) {
    if (!std::isfinite(g)) {
      throw std::runtime_error("non-finite gradient at triple (" + std::to_string(t.user) +
                               "," + std::to_string(t.pos) + "," + std::to_string(t.neg) + ")");
    }
    return g;
  };
  for (const Triple& t : batch) {
    auto gp = grad.user_factors.row(t.user);
    auto p = model.user_factors.row(t.user);
    for (std::size_t k = 0; k < gp.size(); ++k) {
      p[k] -= learning_rate * check(gp[k], t);
      gp[k] = 0.0;
    }
    for (ItemIndex v : {t.pos, t.neg}) {
      auto gq = grad.item_factors.row(v);
      auto q = model.item_factors.row(v);
      for (std::size_t k = 0; k < gq.size(); ++k) {
        q[k] -= learning_rate * check(gq[k], t);
        gq[k] = 0.0;
      }
      model.item_bias[v] -= learning_rate * check(grad.item_bias[v], t);
      grad.item_bias[v] = 0.0;
    }
  }
}

MfModel fit_mf_bpr(const InteractionMatrix& train, const MfConfig& config,
                   long* skipped_positives) {
  if (config.learning_rate <= 0.0 || config.l2 < 0.0 || config.negatives_per_positive < 1 ||
      config.epochs < 0 || config.batch_size < 1) {
    throw std::invalid_argument("invalid MF config");
  }
  Rng rng(config.seed);
  MfModel model = init_mf(train.num_users, train.num_items, config, rng);
  MfGradient grad(model);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto triples = make_epoch_triples(train, config, rng, skipped_positives);
    for (std::size_t start = 0; start < triples.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(triples.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const Triple> batch{triples.data() + start, end - start};
      const double w = 1.0 / static_cast<double>(batch.size());
      for (const Triple& t : batch) accumulate_bpr_gradient(model, t, config.l2, w, grad);
      apply_and_clear(model, grad, config.learning_rate, batch);
    }
  }
  return model;
}

RankedList top_k(std::span<const double> scores, UserIndex user, int k,
                 std::span<const ItemIndex> exclusions) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<char> excluded(scores.size(), 0);
  for (ItemIndex v : exclusions) {
    if (v < excluded.size()) excluded[v] = 1;
  }
  std::vector<ItemIndex> cands;
  cands.reserve(scores.size());
  for (ItemIndex v = 0; v < scores.size(); ++v) {
    if (!excluded[v]) cands.push_back(v);
  }
  if (cands.empty()) throw std::invalid_argument("no candidate items to rank");

  const auto cmp = [&scores](ItemIndex a, ItemIndex b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t depth = std::min<std::size_t>(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + depth, cands.end(), cmp);
  cands.resize(depth);
  return {user, std::move(cands)};
}

RankedList full_ranking(std::span<const double> scores, UserIndex user,
                        std::span<const ItemIndex> exclusions) {
  return top_k(scores, user, static_cast<int>(scores.size()), exclusions);
}

namespace {
std::vector<double> mf_scores(const MfModel& model, UserIndex user) {
  std::vector<double> s(model.num_items());
  for (ItemIndex v = 0; v < s.size(); ++v) s[v] = model.score(user, v);
  return s;
}
}  // namespace

RankedList top_k(const MfModel& model, UserIndex user, int k,
                 std::span<const ItemIndex> exclusions) {
  return top_k(mf_scores(model, user), user, k, exclusions);
}
RankedList top_k(const KnnModel& model, UserIndex user, int k,
                 std::span<const ItemIndex> exclusions) {
  return top_k(knn_score(model, user), user, k, exclusions);
}
RankedList full_ranking(const MfModel& model, UserIndex user,
                        std::span<const ItemIndex> exclusions) {
  return full_ranking(mf_scores(model, user), user, exclusions);
}
RankedList full_ranking(const KnnModel& model, UserIndex user,
                        std::span<const ItemIndex> exclusions) {
  return full_ranking(knn_score(model, user), user, exclusions);
}

}  // namespace fairrec::rec
