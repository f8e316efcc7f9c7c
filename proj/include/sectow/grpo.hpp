#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <span>
#include <string>
#include <vector>

#include "sectow/error.hpp"
#include "sectow/policy.hpp"
#include "sectow/rng.hpp"

namespace sectow {

struct GrpoConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.04;
  double lr = 1.0;
  int epochs_per_batch = 1;
  double std_floor = 1e-8;

  void validate() const {
    if (group_size < 2) fail(ErrorKind::Config, "grpo.group_size must be >= 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail(ErrorKind::Config, "grpo.clip_eps must be in (0, 1)");
    if (!(kl_beta >= 0.0)) fail(ErrorKind::Config, "grpo.kl_beta must be >= 0");
    if (!(lr > 0.0)) fail(ErrorKind::Config, "GRPO learning rate must be positive");
    if (epochs_per_batch < 1) fail(ErrorKind::Config, "grpo.epochs_per_batch must be >= 1");
    if (!(std_floor > 0.0)) fail(ErrorKind::Config, "grpo.std_floor must be positive");
  }
};

struct RolloutGroup {
  std::string input_ref;
  std::vector<Generation> generations;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<std::vector<double>> old_logprobs;

  bool degenerate() const {
    return std::all_of(advantages.begin(), advantages.end(), [](double a) { return a == 0.0; });
  }
};

// Group-relative advantages: (r - mean) / std with the population std.
// Constant groups (or std below the floor) get exactly zero advantage.
inline std::vector<double> compute_advantages(std::span<const double> rewards, double std_floor = 1e-8) {
  require(rewards.size() >= 2, "advantage group needs at least two rewards");
  for (double r : rewards)
    if (!std::isfinite(r)) fail(ErrorKind::InvalidArgument, "non-finite reward");
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) return adv;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  if (sd < std_floor) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / std::max(sd, std_floor);
  return adv;
}

struct SamplingOptions {
  int max_len = 8;
  double temperature = 1.0;
};

// G independent samples for one input. Any reward_fn failure rejects the
// whole group (GroupRejected); callers drop the group rather than guess.
template <class RewardFn>
RolloutGroup collect_group(const Policy& policy, Conditioning cond, int G, RewardFn&& reward_fn, Rng& rng,
                           SamplingOptions opts = {}, std::string input_ref = {}) {
  require(G >= 2, "group size must be >= 2");
  RolloutGroup group;
  group.input_ref = std::move(input_ref);
  for (int i = 0; i < G; ++i) group.generations.push_back(sample(policy, cond, opts.max_len, opts.temperature, rng));
  for (const auto& g : group.generations) {
    double r = 0.0;
    try {
      r = static_cast<double>(reward_fn(g));
    } catch (const std::exception& e) {
      fail(ErrorKind::GroupRejected, "reward failed for group '" + group.input_ref + "': " + e.what());
    }
    group.rewards.push_back(r);
    group.old_logprobs.push_back(g.logprobs);
  }
  group.advantages = compute_advantages(group.rewards);
  return group;
}

inline void finalize_group(RolloutGroup& group, double std_floor) {
  group.advantages = compute_advantages(group.rewards, std_floor);
  group.old_logprobs.clear();
  for (const auto& g : group.generations) group.old_logprobs.push_back(g.logprobs);
}

// k3 estimator of KL(cur || ref) averaged over the generation's tokens:
// exp(ref - cur) - (ref - cur) - 1, evaluated at the generated tokens.
inline double kl_term(const TabularPolicy& cur, const TabularPolicy& ref, const Generation& gen) {
  if (!cur.same_shape(ref)) fail(ErrorKind::Shape, "policy and reference differ in shape");
  require(!gen.tokens.empty() && gen.rows.size() == gen.tokens.size(), "malformed generation");
  double sum = 0.0;
  for (std::size_t t = 0; t < gen.tokens.size(); ++t) {
    const double d = ref.log_prob(gen.rows[t], gen.tokens[t]) - cur.log_prob(gen.rows[t], gen.tokens[t]);
    sum += std::exp(d) - d - 1.0;
  }
  return std::max(0.0, sum / static_cast<double>(gen.tokens.size()));
}

inline double kl_term(const Policy& cur, const Policy& ref, const Generation& gen) {
  if (cur.role() != ref.role()) fail(ErrorKind::Shape, "policy and reference use different context maps");
  return kl_term(cur.table(), ref.table(), gen);
}

struct GrpoLoss {
  double policy_loss = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

// L = mean_g [ (1/T_g) sum_t ( -min(rho*A, clip(rho, 1-eps, 1+eps)*A) + beta*k3_t ) ]
// with rho = exp(cur - old). When `grad` is non-null it receives dL/dtheta.
inline GrpoLoss grpo_objective(const TabularPolicy& cur, const TabularPolicy& ref, std::span<const RolloutGroup> groups,
                               const GrpoConfig& cfg, std::vector<double>* grad) {
  require(!groups.empty(), "GRPO step needs at least one group");
  if (!cur.same_shape(ref)) fail(ErrorKind::Shape, "policy and reference differ in shape");
  std::size_t n_gen = 0;
  for (const auto& g : groups) {
    require(g.generations.size() == g.advantages.size() && g.generations.size() == g.old_logprobs.size(),
            "rollout group lists differ in length");
    n_gen += g.generations.size();
  }
  require(n_gen > 0, "GRPO step needs at least one generation");
  if (grad) grad->assign(cur.size(), 0.0);
  std::vector<double> p(static_cast<std::size_t>(cur.vocab()));
  GrpoLoss out;
  for (const auto& group : groups) {
    for (std::size_t i = 0; i < group.generations.size(); ++i) {
      const auto& gen = group.generations[i];
      const auto& old = group.old_logprobs[i];
      require(old.size() == gen.tokens.size() && gen.rows.size() == gen.tokens.size() && !gen.tokens.empty(),
              "old logprobs missing for a generation");
      const double A = group.advantages[i];
      const double w = 1.0 / (static_cast<double>(n_gen) * static_cast<double>(gen.tokens.size()));
      for (std::size_t t = 0; t < gen.tokens.size(); ++t) {
        const int r = gen.rows[t];
        const int tok = gen.tokens[t];
        const double lp = cur.log_prob(r, tok);
        const double rho = std::exp(lp - old[t]);
        const double unclipped = rho * A;
        const double clipped = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * A;
        const double surrogate = std::min(unclipped, clipped);
        const double d = ref.log_prob(r, tok) - lp;
        const double k3 = std::exp(d) - d - 1.0;
        out.policy_loss -= w * surrogate;
        out.kl += w * k3;
        if (grad) {
          // d(surrogate)/d(lp) is rho*A on the unclipped branch, 0 once clipped.
          const double dsur = (unclipped <= clipped) ? unclipped : 0.0;
          const double dk3 = 1.0 - std::exp(d);
          const double coef = w * (-dsur + cfg.kl_beta * dk3);
          if (coef == 0.0) continue;
          cur.probs(r, 1.0, p);
          for (auto& x : p) x *= -coef;
          p[static_cast<std::size_t>(tok)] += coef;
          cur.add_row_gradient(*grad, r, p);
        }
      }
    }
  }
  out.total = out.policy_loss + cfg.kl_beta * out.kl;
  return out;
}

struct GrpoStepResult {
  GrpoLoss loss;  // before the update
  bool degenerate_batch = false;
};

inline GrpoStepResult grpo_step(TabularPolicy& cur, const TabularPolicy& ref, std::span<const RolloutGroup> groups,
                                const GrpoConfig& cfg) {
  cfg.validate();
  GrpoStepResult res;
  const bool all_zero = std::all_of(groups.begin(), groups.end(), [](const RolloutGroup& g) { return g.degenerate(); });
  if (all_zero) {
    res.loss = grpo_objective(cur, ref, groups, cfg, nullptr);
    res.degenerate_batch = true;
    return res;
  }
  std::vector<double> grad;
  res.loss = grpo_objective(cur, ref, groups, cfg, &grad);
  auto& theta = cur.theta();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.lr * grad[i];
  return res;
}

inline GrpoStepResult grpo_step(Policy& cur, const Policy& ref, std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  if (cur.role() != ref.role()) fail(ErrorKind::Shape, "policy and reference use different context maps");
  return grpo_step(cur.table(), ref.table(), groups, cfg);
}

}  // namespace sectow
