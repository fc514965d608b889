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

#include "fairrec/fair_training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>

#include "fairrec/metrics.hpp"

namespace fairrec::fair {
namespace {

constexpr double kSigmaEps = 1e-12;      // variance floor for standardization
constexpr double kLogisticClamp = 36.8;  // |x| beyond this: sigma(x) is 0/1 exactly

double clamped_logistic(double x) {
  if (x > kLogisticClamp) return 1.0;
  if (x < -kLogisticClamp) return 0.0;
  return logistic(x);
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void validate_config(const FairTrainConfig& c) {
  if (c.alpha < 0.0 || c.alpha >= 1.0) throw std::invalid_argument("alpha must be in [0,1)");
  if (c.k < 1) throw std::invalid_argument("soft top-k size must be >= 1");
  if (c.temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (c.sigmoid_scale <= 0.0) throw std::invalid_argument("sigmoid_scale must be positive");
  if (c.early_stopping.max_epochs < 0 || c.early_stopping.patience < 1 ||
      c.early_stopping.monitor_k < 1) {
    throw std::invalid_argument("invalid early stopping config");
  }
  if (c.mf.learning_rate <= 0.0 || c.mf.l2 < 0.0 || c.mf.negatives_per_positive < 1 ||
      c.mf.batch_size < 1 || c.mf.d < 1) {
    throw std::invalid_argument("invalid MF config");
  }
}

}  // namespace

const char* regularizer_name(Regularizer r) {
  switch (r) {
    case Regularizer::GenreGender: return "GenreGender";
    case Regularizer::BeyondParity: return "BeyondParity";
    case Regularizer::None: return "None";
  }
  return "?";
}

Regularizer regularizer_from_name(const std::string& name) {
  for (Regularizer r :
       {Regularizer::GenreGender, Regularizer::BeyondParity, Regularizer::None}) {
    if (name == regularizer_name(r)) return r;
  }
  throw std::invalid_argument("unknown regularizer '" + name + "'");
}

double SoftTopK::sum() const {
  double s = 0.0;
  for (double m : membership) s += m;
  return s;
}

SoftTopK soft_topk_from_standardized(std::vector<double> standardized, int k, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  SoftTopK soft;
  soft.tau = tau;
  const std::size_t n = standardized.size();
  if (n < static_cast<std::size_t>(k) + 1) {
    soft.hard_fallback = true;
    soft.membership.assign(n, 1.0);
    soft.standardized = std::move(standardized);
    return soft;
  }
  // Midpoint of the k-th and (k+1)-th largest values; a constant under
  // differentiation.
  std::vector<double> tmp = standardized;
  std::nth_element(tmp.begin(), tmp.begin() + (k - 1), tmp.end(), std::greater<double>());
  const double kth = tmp[k - 1];
  const double next = *std::max_element(tmp.begin() + k, tmp.end());
  soft.threshold = 0.5 * (kth + next);

  soft.membership.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    soft.membership[i] = clamped_logistic((standardized[i] - soft.threshold) / tau);
  }
  soft.standardized = std::move(standardized);
  return soft;
}

SoftTopK soft_topk_membership(std::span<const double> scores, int k, double tau,
                              bool* hard_fallback_warning) {
  if (scores.empty()) throw std::invalid_argument("no candidate scores");
  const std::size_t n = scores.size();
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(n);
  const double sigma = std::sqrt(var + kSigmaEps);

  std::vector<double> standardized(n);
  for (std::size_t i = 0; i < n; ++i) standardized[i] = (scores[i] - mean) / sigma;

  SoftTopK soft = soft_topk_from_standardized(std::move(standardized), k, tau);
  soft.mean = mean;
  soft.sigma = sigma;
  if (soft.hard_fallback && hard_fallback_warning) *hard_fallback_warning = true;
  return soft;
}

std::vector<double> soft_user_coverage(const SoftUserLists& user, const CategoryMatrix& cm) {
  if (user.candidates.size() != user.soft.membership.size()) {
    throw std::invalid_argument("membership/candidate size mismatch");
  }
  std::vector<double> cc(cm.num_categories, 0.0);
  const double total = user.soft.sum();
  if (total <= 0.0) throw std::invalid_argument("soft membership sum is zero");
  for (std::size_t i = 0; i < user.candidates.size(); ++i) {
    const double m = user.soft.membership[i];
    if (m == 0.0) continue;
    for (const auto& [c, f] : cm.item_fracs[user.candidates[i]]) cc[c] += m * f;
  }
  for (double& v : cc) v /= total;
  return cc;
}

double soft_category_coverage(std::span<const SoftUserLists> group, const CategoryMatrix& cm,
                              CategoryIndex c) {
  if (group.empty()) throw std::invalid_argument("empty user group");
  if (c >= cm.num_categories) throw std::invalid_argument("category index out of range");
  KahanSum sum;
  for (const auto& user : group) sum.add(soft_user_coverage(user, cm)[c]);
  return sum.value() / static_cast<double>(group.size());
}

double modulate_fairness_loss(double raw_gbs, double max_batch_rec_loss,
                              const FairTrainConfig& config) {
  if (max_batch_rec_loss < 0.0) {
    throw std::invalid_argument("max_batch_rec_loss must be nonnegative");
  }
  return max_batch_rec_loss *
         clamped_logistic((raw_gbs - config.sigmoid_center) / config.sigmoid_scale);
}

double combined_loss(double alpha, double fair_term, double rec_term) {
  if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("alpha must be in [0,1)");
  return alpha * fair_term + (1.0 - alpha) * rec_term;
}

double beyond_parity_uval(std::span<const ScoredPair> pairs) {
  struct ItemAgg {
    double y_f = 0, r_f = 0, y_m = 0, r_m = 0;
    int n_f = 0, n_m = 0;
  };
  std::map<ItemIndex, ItemAgg> by_item;
  for (const auto& p : pairs) {
    auto& agg = by_item[p.item];
    if (p.group == Gender::Female) {
      agg.y_f += p.prediction;
      agg.r_f += p.rating;
      ++agg.n_f;
    } else {
      agg.y_m += p.prediction;
      agg.r_m += p.rating;
      ++agg.n_m;
    }
  }
  KahanSum sum;
  int n = 0;
  for (const auto& [item, a] : by_item) {
    if (a.n_f == 0 || a.n_m == 0) continue;  // group expectation undefined
    const double diff_f = (a.y_f - a.r_f) / a.n_f;
    const double diff_m = (a.y_m - a.r_m) / a.n_m;
    sum.add(std::abs(diff_f - diff_m));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no item is rated by both groups");
  return sum.value() / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Batch evaluation engine
// ---------------------------------------------------------------------------

namespace {

struct UserState {
  UserIndex user = 0;
  std::vector<ItemIndex> candidates;
  std::vector<double> standardized;
  std::vector<double> membership;
  double sigma = 1.0;
  double threshold = 0.0;
  double membership_sum = 0.0;
  std::vector<double> cc;  // soft CC_u per category
  bool hard = false;
};

// Quantities treated as constants under differentiation, captured when the
// batch is first evaluated: per-user soft top-k thresholds and the max
// per-example rec loss that scales the modulated fairness term.
struct BatchStops {
  std::vector<double> thresholds;  // aligned with the distinct-user list
  std::vector<char> hard;
  double max_rec_loss = 0.0;
  bool filled = false;
};

struct BatchOutcome {
  double rec_loss_mean = 0.0;
  double fair_raw = 0.0;
  double fair_modulated = 0.0;
  double combined = 0.0;
  bool fair_active = false;
  int hard_fallback_users = 0;
  bool shared_items_missing = false;  // BeyondParity: no co-rated item
};

std::vector<UserIndex> distinct_users(std::span<const rec::Triple> batch) {
  std::vector<UserIndex> users;
  users.reserve(batch.size());
  for (const auto& t : batch) users.push_back(t.user);
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  return users;
}

UserState build_user_state(const rec::MfModel& model, const rec::InteractionMatrix& train,
                           UserIndex u, const FairTrainConfig& config,
                           const double* frozen_threshold, bool frozen_hard,
                           const CategoryMatrix& cm) {
  UserState st;
  st.user = u;
  const std::size_t num_items = train.num_items;
  {
    std::vector<char> in_train(num_items, 0);
    for (ItemIndex v : train.user_items[u]) in_train[v] = 1;
    st.candidates.reserve(num_items - train.user_items[u].size());
    for (ItemIndex v = 0; v < num_items; ++v) {
      if (!in_train[v]) st.candidates.push_back(v);
    }
  }
  const std::size_t n = st.candidates.size();
  if (n == 0) return st;

  std::vector<double> scores(n);
  const auto p = model.user_factors.row(u);
  for (std::size_t i = 0; i < n; ++i) {
    const ItemIndex v = st.candidates[i];
    scores[i] = model.global_bias + model.user_bias[u] + model.item_bias[v] +
                dot(p, model.item_factors.row(v));
  }

  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(n);
  st.sigma = std::sqrt(var + kSigmaEps);
  st.standardized.resize(n);
  for (std::size_t i = 0; i < n; ++i) st.standardized[i] = (scores[i] - mean) / st.sigma;

  if (frozen_threshold != nullptr) {
    st.hard = frozen_hard;
    st.threshold = *frozen_threshold;
  } else if (n < static_cast<std::size_t>(config.k) + 1) {
    st.hard = true;
  } else {
    std::vector<double> tmp = st.standardized;
    std::nth_element(tmp.begin(), tmp.begin() + (config.k - 1), tmp.end(),
                     std::greater<double>());
    const double kth = tmp[config.k - 1];
    const double next = *std::max_element(tmp.begin() + config.k, tmp.end());
    st.threshold = 0.5 * (kth + next);
  }

  st.membership.resize(n);
  if (st.hard) {
    std::fill(st.membership.begin(), st.membership.end(), 1.0);
    st.membership_sum = static_cast<double>(n);
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      st.membership[i] =
          clamped_logistic((st.standardized[i] - st.threshold) / config.temperature);
      total += st.membership[i];
    }
    st.membership_sum = total;
  }

  st.cc.assign(cm.num_categories, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = st.membership[i];
    if (m == 0.0) continue;
    for (const auto& [c, f] : cm.item_fracs[st.candidates[i]]) st.cc[c] += m * f;
  }
  for (double& v : st.cc) v /= st.membership_sum;
  return st;
}

// Backpropagates coeff[c] = dL/d(cc_u[c]) through memberships, the per-user
// score standardization and the MF scoring into the model gradient.
void backward_user(const rec::MfModel& model, const UserState& st, const CategoryMatrix& cm,
                   std::span<const double> coeff, double tau, rec::MfGradient& grad) {
  if (st.hard || st.candidates.empty()) return;  // memberships constant
  const std::size_t n = st.candidates.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  double t_user = 0.0;
  for (std::size_t c = 0; c < coeff.size(); ++c) t_user += coeff[c] * st.cc[c];

  // dL/d(standardized score)
  std::vector<double> g_std(n);
  double g_sum = 0.0;
  double g_dot_std = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double num = 0.0;
    for (const auto& [c, f] : cm.item_fracs[st.candidates[i]]) num += coeff[c] * f;
    const double dldm = (num - t_user) / st.membership_sum;
    const double m = st.membership[i];
    const double g = dldm * m * (1.0 - m) / tau;
    g_std[i] = g;
    g_sum += g;
    g_dot_std += g * st.standardized[i];
  }

  // Layer-norm style backward through (s - mean) / sqrt(var + eps):
  // dL/ds_i = (g_i - mean(g) - s~_i * mean(g . s~)) / sigma.
  const auto p = model.user_factors.row(st.user);
  auto gp = grad.user_factors.row(st.user);
  for (std::size_t i = 0; i < n; ++i) {
    const double gs =
        (g_std[i] - g_sum * inv_n - st.standardized[i] * g_dot_std * inv_n) / st.sigma;
    if (gs == 0.0) continue;
    const ItemIndex v = st.candidates[i];
    grad.item_bias[v] += gs;
    const auto q = model.item_factors.row(v);
    auto gq = grad.item_factors.row(v);
    for (std::size_t k = 0; k < p.size(); ++k) {
      gq[k] += gs * p[k];
      gp[k] += gs * q[k];
    }
  }
}

// Evaluates one batch: mean BPR loss, the configured fairness term, and the
// combined loss. When grad is non-null the exact gradient of the combined
// loss (with the stops frozen) is accumulated. When stops->filled is false
// the stops are captured from this model; when true they are reused.
BatchOutcome eval_batch(const rec::MfModel& model, const rec::InteractionMatrix& train,
                        std::span<const Gender> genders, const CategoryMatrix& cm,
                        const FairTrainConfig& config, std::span<const rec::Triple> batch,
                        BatchStops* stops, rec::MfGradient* grad) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  BatchOutcome out;
  const double eff_alpha = config.regularizer == Regularizer::None ? 0.0 : config.alpha;

  // Recommendation term.
  double fresh_max = 0.0;
  {
    KahanSum rec_sum;
    const double w = (1.0 - eff_alpha) / static_cast<double>(batch.size());
    for (const auto& t : batch) {
      const double loss = rec::bpr_loss(model, t, config.mf.l2);
      rec_sum.add(loss);
      fresh_max = std::max(fresh_max, loss);
      if (grad) rec::accumulate_bpr_gradient(model, t, config.mf.l2, w, *grad);
    }
    out.rec_loss_mean = rec_sum.value() / static_cast<double>(batch.size());
  }

  double fair_term = 0.0;
  if (eff_alpha > 0.0) {
    const auto users = distinct_users(batch);
    std::vector<UserIndex> males, females;
    for (UserIndex u : users) {
      (genders[u] == Gender::Male ? males : females).push_back(u);
    }
    if (males.empty() || females.empty()) {
      out.fair_active = false;
    } else if (config.regularizer == Regularizer::GenreGender) {
      // Soft CC per user; thresholds come from the stops when frozen.
      std::vector<UserState> states;
      states.reserve(users.size());
      const bool frozen = stops != nullptr && stops->filled;
      for (std::size_t ui = 0; ui < users.size(); ++ui) {
        const double* thr = frozen ? &stops->thresholds[ui] : nullptr;
        const bool hard = frozen ? stops->hard[ui] != 0 : false;
        states.push_back(
            build_user_state(model, train, users[ui], config, thr, hard, cm));
        if (states.back().hard) ++out.hard_fallback_users;
      }
      if (stops != nullptr && !stops->filled) {
        stops->thresholds.resize(users.size());
        stops->hard.resize(users.size());
        for (std::size_t ui = 0; ui < users.size(); ++ui) {
          stops->thresholds[ui] = states[ui].threshold;
          stops->hard[ui] = states[ui].hard ? 1 : 0;
        }
      }

      // Users with no candidates contribute nothing; drop them from groups.
      std::vector<const UserState*> group_m, group_f;
      for (const auto& st : states) {
        if (st.candidates.empty()) continue;
        (genders[st.user] == Gender::Male ? group_m : group_f).push_back(&st);
      }
      if (group_m.empty() || group_f.empty()) {
        out.fair_active = false;
      } else {
        out.fair_active = true;
        std::vector<double> cc_m(cm.num_categories, 0.0), cc_f(cm.num_categories, 0.0);
        for (const auto* st : group_m) {
          for (std::size_t c = 0; c < cm.num_categories; ++c) cc_m[c] += st->cc[c];
        }
        for (const auto* st : group_f) {
          for (std::size_t c = 0; c < cm.num_categories; ++c) cc_f[c] += st->cc[c];
        }
        const double inv_m = 1.0 / static_cast<double>(group_m.size());
        const double inv_f = 1.0 / static_cast<double>(group_f.size());
        double raw = 0.0;
        for (std::size_t c = 0; c < cm.num_categories; ++c) {
          cc_m[c] *= inv_m;
          cc_f[c] *= inv_f;
          raw += std::abs(cc_m[c] - cc_f[c]);
        }
        out.fair_raw = raw;

        const double max_rec = (stops != nullptr && stops->filled)
                                   ? stops->max_rec_loss
                                   : fresh_max;
        const double z = (raw - config.sigmoid_center) / config.sigmoid_scale;
        const double sig = clamped_logistic(z);
        out.fair_modulated = max_rec * sig;
        fair_term = out.fair_modulated;

        if (grad) {
          // d(modulated)/d(raw); zero where the sigmoid is clamped.
          const double dmod =
              max_rec * sig * (1.0 - sig) / config.sigmoid_scale;
          if (dmod != 0.0) {
            std::vector<double> coeff_m(cm.num_categories), coeff_f(cm.num_categories);
            for (std::size_t c = 0; c < cm.num_categories; ++c) {
              const double s = sign_of(cc_m[c] - cc_f[c]);
              coeff_m[c] = eff_alpha * dmod * s * inv_m;
              coeff_f[c] = -eff_alpha * dmod * s * inv_f;
            }
            for (const auto* st : group_m) {
              backward_user(model, *st, cm, coeff_m, config.temperature, *grad);
            }
            for (const auto* st : group_f) {
              backward_user(model, *st, cm, coeff_f, config.temperature, *grad);
            }
          }
        }
      }
    } else {  // BeyondParity
      struct ItemAgg {
        double y_f = 0, r_f = 0, y_m = 0, r_m = 0;
        int n_f = 0, n_m = 0;
      };
      std::map<ItemIndex, ItemAgg> by_item;
      const auto add_pair = [&](UserIndex u, ItemIndex v, double rating) {
        const double y = model.score(u, v);
        auto& agg = by_item[v];
        if (genders[u] == Gender::Female) {
          agg.y_f += y;
          agg.r_f += rating;
          ++agg.n_f;
        } else {
          agg.y_m += y;
          agg.r_m += rating;
          ++agg.n_m;
        }
      };
      for (const auto& t : batch) {
        add_pair(t.user, t.pos, train.rating(t.user, t.pos));
        add_pair(t.user, t.neg, 0.0);
      }
      KahanSum sum;
      int n_items = 0;
      for (const auto& [v, a] : by_item) {
        if (a.n_f == 0 || a.n_m == 0) continue;
        sum.add(std::abs((a.y_f - a.r_f) / a.n_f - (a.y_m - a.r_m) / a.n_m));
        ++n_items;
      }
      if (n_items == 0) {
        out.fair_active = false;
        out.shared_items_missing = true;
      } else {
        out.fair_active = true;
        out.fair_raw = sum.value() / static_cast<double>(n_items);
        out.fair_modulated = out.fair_raw;  // comparator enters Eq-8 unmodulated
        fair_term = out.fair_raw;
        if (grad) {
          // dU/dy for a pair of group g on co-rated item j:
          //   sign(D_j) / (n * count_{g,j}) with D_j = diff_f - diff_m,
          //   positive for female pairs, negative for male pairs.
          for (const auto& t : batch) {
            for (const ItemIndex v : {t.pos, t.neg}) {
              const auto& a = by_item[v];
              if (a.n_f == 0 || a.n_m == 0) continue;
              const double d = (a.y_f - a.r_f) / a.n_f - (a.y_m - a.r_m) / a.n_m;
              const double side = genders[t.user] == Gender::Female
                                      ? 1.0 / static_cast<double>(a.n_f)
                                      : -1.0 / static_cast<double>(a.n_m);
              const double w =
                  eff_alpha * sign_of(d) * side / static_cast<double>(n_items);
              if (w == 0.0) continue;
              const auto p = model.user_factors.row(t.user);
              const auto q = model.item_factors.row(v);
              auto gp = grad->user_factors.row(t.user);
              auto gq = grad->item_factors.row(v);
              for (std::size_t k = 0; k < p.size(); ++k) {
                gp[k] += w * q[k];
                gq[k] += w * p[k];
              }
              grad->item_bias[v] += w;
              grad->user_bias[t.user] += w;
              grad->global_bias += w;
            }
          }
        }
      }
    }
  }

  if (stops != nullptr && !stops->filled) {
    stops->max_rec_loss = fresh_max;
    stops->filled = true;
  }
  out.combined = eff_alpha * fair_term + (1.0 - eff_alpha) * out.rec_loss_mean;
  return out;
}

}  // namespace

GenreGenderLoss fairness_loss_genre_gender(const rec::MfModel& model,
                                           const rec::InteractionMatrix& train,
                                           std::span<const UserIndex> males,
                                           std::span<const UserIndex> females,
                                           const CategoryMatrix& cm,
                                           const FairTrainConfig& config) {
  validate_config(config);
  GenreGenderLoss out;
  out.cc_male.assign(cm.num_categories, 0.0);
  out.cc_female.assign(cm.num_categories, 0.0);
  if (males.empty() || females.empty()) return out;  // counter incremented by caller

  const auto group_cc = [&](std::span<const UserIndex> group, std::vector<double>& cc) {
    std::size_t counted = 0;
    for (UserIndex u : group) {
      const UserState st = build_user_state(model, train, u, config, nullptr, false, cm);
      if (st.candidates.empty()) continue;
      for (std::size_t c = 0; c < cm.num_categories; ++c) cc[c] += st.cc[c];
      ++counted;
    }
    if (counted > 0) {
      for (double& v : cc) v /= static_cast<double>(counted);
    }
    return counted;
  };
  const std::size_t n_m = group_cc(males, out.cc_male);
  const std::size_t n_f = group_cc(females, out.cc_female);
  if (n_m == 0 || n_f == 0) return out;

  out.active = true;
  KahanSum raw;
  for (std::size_t c = 0; c < cm.num_categories; ++c) {
    raw.add(std::abs(out.cc_male[c] - out.cc_female[c]));
  }
  out.raw_gbs = raw.value();
  return out;
}

double validation_ndcg(const rec::MfModel& model, const rec::InteractionMatrix& train,
                       const std::vector<std::vector<ItemIndex>>& held_out, int k) {
  std::vector<RankedList> lists;
  for (UserIndex u = 0; u < train.num_users; ++u) {
    if (u >= held_out.size() || held_out[u].empty()) continue;
    lists.push_back(rec::top_k(model, u, k, train.user_items[u]));
  }
  if (lists.empty()) throw std::invalid_argument("no user has held-out items");
  return metrics::ndcg_at_k(lists, held_out, k);
}

TrainResult train_fair(const rec::InteractionMatrix& train,
                       const std::vector<std::vector<ItemIndex>>& validation_items,
                       std::span<const Gender> genders, const CategoryMatrix& cm,
                       const FairTrainConfig& config) {
  validate_config(config);
  if (genders.size() != train.num_users) {
    throw std::invalid_argument("gender vector size mismatch");
  }
  const double eff_alpha =
      config.regularizer == Regularizer::None ? 0.0 : config.alpha;

  bool has_validation = false;
  for (const auto& v : validation_items) {
    if (!v.empty()) {
      has_validation = true;
      break;
    }
  }

  Rng rng(config.mf.seed);
  TrainResult res;
  rec::MfModel model = rec::init_mf(train.num_users, train.num_items, config.mf, rng);
  rec::MfGradient grad(model);

  rec::MfModel best = model;
  EarlyStopper stopper(config.early_stopping.min_delta, config.early_stopping.patience);

  const auto batch_size = static_cast<std::size_t>(config.mf.batch_size);
  for (int epoch = 1; epoch <= config.early_stopping.max_epochs; ++epoch) {
    const auto triples =
        rec::make_epoch_triples(train, config.mf, rng, &res.stats.skipped_positives);
    KahanSum rec_sum, raw_sum, mod_sum, comb_sum;
    std::size_t batches = 0, fair_batches = 0;

    for (std::size_t start = 0; start < triples.size(); start += batch_size) {
      const std::size_t end = std::min(triples.size(), start + batch_size);
      const std::span<const rec::Triple> batch{triples.data() + start, end - start};
      ++batches;

      if (eff_alpha == 0.0) {
        // Keep the arithmetic bit-identical to fit_mf_bpr.
        KahanSum rec_batch;
        const double w = 1.0 / static_cast<double>(batch.size());
        for (const auto& t : batch) {
          rec_batch.add(rec::bpr_loss(model, t, config.mf.l2));
          rec::accumulate_bpr_gradient(model, t, config.mf.l2, w, grad);
        }
        rec::apply_and_clear(model, grad, config.mf.learning_rate, batch);
        const double rec_mean = rec_batch.value() / static_cast<double>(batch.size());
        rec_sum.add(rec_mean);
        comb_sum.add(rec_mean);
        continue;
      }

      const BatchOutcome out =
          eval_batch(model, train, genders, cm, config, batch, nullptr, &grad);
      if (!std::isfinite(out.combined)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
      }
      if (!out.fair_active) {
        if (out.shared_items_missing) {
          ++res.stats.batches_without_shared_items;
        } else {
          ++res.stats.batches_without_both_genders;
        }
      } else {
        ++fair_batches;
        raw_sum.add(out.fair_raw);
        mod_sum.add(out.fair_modulated);
      }
      res.stats.hard_fallback_users += out.hard_fallback_users;
      rec_sum.add(out.rec_loss_mean);
      comb_sum.add(out.combined);

      // The fair pass may touch every item row; batch users cover all touched
      // user rows (the rec pass only touches batch users).
      const auto users = distinct_users(batch);
      for (UserIndex u : users) {
        auto gp = grad.user_factors.row(u);
        auto p = model.user_factors.row(u);
        for (std::size_t k = 0; k < gp.size(); ++k) {
          if (!std::isfinite(gp[k])) {
            throw std::runtime_error("non-finite gradient at epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(batches));
          }
          p[k] -= config.mf.learning_rate * gp[k];
          gp[k] = 0.0;
        }
        grad.user_bias[u] = 0.0;  // computed for completeness, frozen under BPR
      }
      for (ItemIndex v = 0; v < train.num_items; ++v) {
        auto gq = grad.item_factors.row(v);
        auto q = model.item_factors.row(v);
        for (std::size_t k = 0; k < gq.size(); ++k) {
          if (!std::isfinite(gq[k])) {
            throw std::runtime_error("non-finite gradient at epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(batches));
          }
          q[k] -= config.mf.learning_rate * gq[k];
          gq[k] = 0.0;
        }
        model.item_bias[v] -= config.mf.learning_rate * grad.item_bias[v];
        grad.item_bias[v] = 0.0;
      }
      grad.global_bias = 0.0;
    }

    EpochLog row;
    row.epoch = epoch;
    row.rec_loss = batches ? rec_sum.value() / static_cast<double>(batches) : 0.0;
    row.fair_loss_raw =
        fair_batches ? raw_sum.value() / static_cast<double>(fair_batches) : 0.0;
    row.fair_loss_modulated =
        fair_batches ? mod_sum.value() / static_cast<double>(fair_batches) : 0.0;
    row.combined_loss = batches ? comb_sum.value() / static_cast<double>(batches) : 0.0;
    row.val_ndcg20 =
        has_validation
            ? validation_ndcg(model, train, validation_items, config.early_stopping.monitor_k)
            : 0.0;
    res.log.push_back(row);
    res.stopped_epoch = epoch;

    if (has_validation) {
      const bool stop = stopper.update(row.val_ndcg20);
      if (stopper.improved_best()) {
        best = model;
        res.best_epoch = epoch;
      }
      if (stop) break;
    } else {
      res.best_epoch = epoch;
    }
  }

  res.model = has_validation ? std::move(best) : std::move(model);
  if (res.best_epoch == 0) res.best_epoch = res.stopped_epoch;
  return res;
}

LossProbe make_bpr_loss_probe(std::vector<rec::Triple> batch, double l2) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  auto shared = std::make_shared<const std::vector<rec::Triple>>(std::move(batch));
  LossProbe probe;
  probe.loss = [shared, l2](const rec::MfModel& m) {
    KahanSum sum;
    for (const auto& t : *shared) sum.add(rec::bpr_loss(m, t, l2));
    return sum.value() / static_cast<double>(shared->size());
  };
  probe.grad = [shared, l2](const rec::MfModel& m, rec::MfGradient& g) {
    const double w = 1.0 / static_cast<double>(shared->size());
    for (const auto& t : *shared) rec::accumulate_bpr_gradient(m, t, l2, w, g);
  };
  return probe;
}

LossProbe make_combined_loss_probe(const rec::MfModel& base,
                                   const rec::InteractionMatrix& train,
                                   std::vector<rec::Triple> batch,
                                   std::vector<Gender> genders, const CategoryMatrix& cm,
                                   const FairTrainConfig& config) {
  validate_config(config);
  struct Ctx {
    const rec::InteractionMatrix* train;
    std::vector<rec::Triple> batch;
    std::vector<Gender> genders;
    const CategoryMatrix* cm;
    FairTrainConfig config;
    BatchStops stops;
  };
  auto ctx = std::make_shared<Ctx>(
      Ctx{&train, std::move(batch), std::move(genders), &cm, config, {}});
  // Capture the stops (thresholds, max batch rec loss) at the base model.
  eval_batch(base, *ctx->train, ctx->genders, *ctx->cm, ctx->config, ctx->batch,
             &ctx->stops, nullptr);

  LossProbe probe;
  probe.loss = [ctx](const rec::MfModel& m) {
    return eval_batch(m, *ctx->train, ctx->genders, *ctx->cm, ctx->config, ctx->batch,
                      &ctx->stops, nullptr)
        .combined;
  };
  probe.grad = [ctx](const rec::MfModel& m, rec::MfGradient& g) {
    eval_batch(m, *ctx->train, ctx->genders, *ctx->cm, ctx->config, ctx->batch,
               &ctx->stops, &g);
  };
  return probe;
}

GradCheckResult gradient_check(const rec::MfModel& model, const LossProbe& probe,
                               double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  rec::MfGradient analytic(model);
  probe.grad(model, analytic);

  rec::MfModel work = model;
  GradCheckResult res;
  const auto check = [&](double& slot, double a, const std::string& name) {
    const double orig = slot;
    slot = orig + epsilon;
    const double up = probe.loss(work);
    slot = orig - epsilon;
    const double down = probe.loss(work);
    slot = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_param = name;
      res.analytic = a;
      res.numeric = numeric;
    }
  };

  for (std::size_t r = 0; r < work.user_factors.rows; ++r) {
    for (std::size_t c = 0; c < work.user_factors.cols; ++c) {
      check(work.user_factors(r, c), analytic.user_factors(r, c),
            "user_factors[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  for (std::size_t r = 0; r < work.item_factors.rows; ++r) {
    for (std::size_t c = 0; c < work.item_factors.cols; ++c) {
      check(work.item_factors(r, c), analytic.item_factors(r, c),
            "item_factors[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  for (std::size_t u = 0; u < work.user_bias.size(); ++u) {
    check(work.user_bias[u], analytic.user_bias[u], "user_bias[" + std::to_string(u) + "]");
  }
  for (std::size_t v = 0; v < work.item_bias.size(); ++v) {
    check(work.item_bias[v], analytic.item_bias[v], "item_bias[" + std::to_string(v) + "]");
  }
  check(work.global_bias, analytic.global_bias, "global_bias");
  return res;
}

}  // namespace fairrec::fair
