#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "sectow/grpo.hpp"
#include "test_util.hpp"

using namespace sectow;

namespace {

double lsm(const std::vector<double>& theta, int vocab, int r, int t) {
  const double* row = theta.data() + r * vocab;
  double m = row[0];
  for (int j = 1; j < vocab; ++j) m = std::max(m, row[j]);
  double z = 0.0;
  for (int j = 0; j < vocab; ++j) z += std::exp(row[j] - m);
  return row[t] - m - std::log(z);
}

// The clipped surrogate with the k3 penalty, written from its definition.
double oracle_objective(const std::vector<double>& theta, const std::vector<double>& ref, int vocab,
                        const std::vector<RolloutGroup>& groups, double eps, double beta) {
  double total = 0.0;
  std::size_t n_gen = 0;
  for (const auto& g : groups) n_gen += g.generations.size();
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.generations.size(); ++i) {
      const auto& gen = g.generations[i];
      double s = 0.0;
      for (std::size_t t = 0; t < gen.tokens.size(); ++t) {
        const double lp = lsm(theta, vocab, gen.rows[t], gen.tokens[t]);
        const double rho = std::exp(lp - g.old_logprobs[i][t]);
        const double A = g.advantages[i];
        const double sur = std::min(rho * A, std::clamp(rho, 1 - eps, 1 + eps) * A);
        const double x = lsm(ref, vocab, gen.rows[t], gen.tokens[t]) - lp;
        s += -sur + beta * (std::exp(x) - x - 1);
      }
      total += s / static_cast<double>(gen.tokens.size());
    }
  return total / static_cast<double>(n_gen);
}

std::vector<double> oracle_advantages(const std::vector<double>& r) {
  const double n = static_cast<double>(r.size());
  const double mu = std::accumulate(r.begin(), r.end(), 0.0) / n;
  double v = 0.0;
  for (double x : r) v += (x - mu) * (x - mu);
  const double sd = std::sqrt(v / n);
  std::vector<double> out;
  for (double x : r) out.push_back(sd == 0.0 ? 0.0 : (x - mu) / sd);
  return out;
}

TabularPolicy random_table(int rows, int vocab, Rng& rng) {
  TabularPolicy t(rows, vocab);
  for (auto& x : t.theta()) x = 2.0 * rng.uniform() - 1.0;
  return t;
}

}  // namespace

TEST(Advantages, PropertyAgainstOracle) {
  Rng rng(21);
  int constant_cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng.range(2, 16);
    std::vector<double> r(static_cast<std::size_t>(n));
    const int style = trial % 4;
    for (auto& x : r) {
      if (style == 0) x = static_cast<double>(rng.range(0, 1));
      else if (style == 1) x = 10.0 * rng.uniform() - 5.0;
      else if (style == 2) x = 3.0;
      else x = static_cast<double>(rng.range(0, 3));
    }
    const auto adv = compute_advantages(r);
    const auto expect = oracle_advantages(r);
    ASSERT_EQ(adv.size(), r.size());
    if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; })) {
      ++constant_cases;
      for (double a : adv) EXPECT_EQ(a, 0.0);
      continue;
    }
    double mean = 0.0, var = 0.0;
    for (double a : adv) mean += a;
    mean /= n;
    for (double a : adv) var += (a - mean) * (a - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var / n), 1.0, 1e-6);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(adv[i], expect[i]);
  }
  EXPECT_GT(constant_cases, 100);
}

TEST(Advantages, RejectsBadInput) {
  EXPECT_ERROR_KIND(compute_advantages(std::vector<double>{1.0}), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(compute_advantages(std::vector<double>{1.0, std::nan("")}), ErrorKind::InvalidArgument);
}

TEST(GrpoGradient, MatchesCentralDifferences) {
  Rng rng(22);
  const int rows = 5, vocab = 6;  // 30 parameters
  for (int trial = 0; trial < 30; ++trial) {
    auto cur = random_table(rows, vocab, rng);
    auto ref = random_table(rows, vocab, rng);
    GrpoConfig cfg;
    cfg.clip_eps = 0.2;
    cfg.kl_beta = trial % 3 == 0 ? 0.0 : 0.3;
    std::vector<RolloutGroup> groups(2);
    for (auto& g : groups) {
      for (int i = 0; i < 4; ++i) {
        Generation gen;
        const int len = rng.range(1, 4);
        std::vector<double> old;
        for (int t = 0; t < len; ++t) {
          gen.rows.push_back(rng.range(0, rows - 1));
          gen.tokens.push_back(rng.range(0, vocab - 1));
          // old policy a little off so some ratios clip and others do not
          old.push_back(cur.log_prob(gen.rows.back(), gen.tokens.back()) + 0.6 * (rng.uniform() - 0.5));
        }
        g.generations.push_back(gen);
        g.old_logprobs.push_back(old);
        g.rewards.push_back(static_cast<double>(rng.range(0, 1)));
      }
      g.rewards[0] = 0.0;
      g.rewards[1] = 1.0;
      g.advantages = compute_advantages(g.rewards);
    }
    std::vector<double> grad;
    const auto loss = grpo_objective(cur, ref, groups, cfg, &grad);
    EXPECT_NEAR(loss.total, oracle_objective(cur.theta(), ref.theta(), vocab, groups, cfg.clip_eps, cfg.kl_beta), 1e-12);
    const double h = 1e-5;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      auto plus = cur.theta(), minus = cur.theta();
      plus[i] += h;
      minus[i] -= h;
      const double fp = oracle_objective(plus, ref.theta(), vocab, groups, cfg.clip_eps, cfg.kl_beta);
      const double fm = oracle_objective(minus, ref.theta(), vocab, groups, cfg.clip_eps, cfg.kl_beta);
      const double fd = (fp - fm) / (2 * h);
      const double err = std::abs(fd - grad[i]);
      const double rel = err / std::max(std::abs(fd), std::abs(grad[i]));
      // A ratio sitting within h of a clip edge makes the difference quotient
      // straddle the kink; the random offsets above make that vanishingly rare.
      EXPECT_TRUE(err <= 1e-9 || rel <= 1e-4) << "trial " << trial << " param " << i << " fd " << fd << " an " << grad[i];
    }
  }
}

TEST(GrpoObjective, ClippedTokensGiveNoSurrogateGradient) {
  TabularPolicy cur(1, 3), ref(1, 3);
  RolloutGroup g;
  Generation gen;
  gen.rows = {0};
  gen.tokens = {0};
  g.generations = {gen, gen};
  // rho = e^{1} >> 1 + eps with positive advantage: clipped branch.
  g.old_logprobs = {{cur.log_prob(0, 0) - 1.0}, {cur.log_prob(0, 0) - 1.0}};
  g.advantages = {1.0, 1.0};
  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  std::vector<double> grad;
  const auto loss = grpo_objective(cur, ref, std::vector<RolloutGroup>{g}, cfg, &grad);
  EXPECT_NEAR(loss.policy_loss, -(1.0 + cfg.clip_eps), 1e-12);
  for (double x : grad) EXPECT_EQ(x, 0.0);
}

TEST(KlTerm, NonNegativeAndZeroAtReference) {
  Rng rng(23);
  auto a = random_table(3, 4, rng);
  auto b = random_table(3, 4, rng);
  Generation gen;
  gen.rows = {0, 1, 2};
  gen.tokens = {3, 0, 1};
  EXPECT_EQ(kl_term(a, a, gen), 0.0);
  EXPECT_GE(kl_term(a, b, gen), 0.0);
  EXPECT_ERROR_KIND(kl_term(a, TabularPolicy(2, 4), gen), ErrorKind::Shape);
  EXPECT_ERROR_KIND(kl_term(Policy(Role::Attacker), Policy(Role::Defender), gen), ErrorKind::Shape);
}

TEST(GrpoStep, DegenerateBatchLeavesParametersUntouched) {
  Rng rng(24);
  Policy p(Role::Defender);
  const Policy before = p;
  auto g = collect_group(p, {0, 0}, 4, [](const Generation&) { return 1; }, rng);
  EXPECT_TRUE(g.degenerate());
  const auto res = grpo_step(p, before, std::vector<RolloutGroup>{g}, GrpoConfig{});
  EXPECT_TRUE(res.degenerate_batch);
  EXPECT_EQ(p, before);
}

TEST(GrpoStep, RaisesExpectedRewardOnBandit) {
  // Reward 1 for opening with COMPLY: repeated steps must raise its probability.
  Rng rng(25);
  Policy p(Role::Defender);
  const Policy ref = p;
  const int row = Policy::row_index(3, 0, tok::kBos);
  const double start = std::exp(p.table().log_prob(row, tok::kComply));
  GrpoConfig cfg;
  cfg.lr = 5.0;
  for (int s = 0; s < 30; ++s) {
    std::vector<RolloutGroup> groups;
    for (int b = 0; b < 4; ++b)
      groups.push_back(collect_group(p, {3, 0}, 8, [](const Generation& g) { return g.tokens[0] == tok::kComply; },
                                     rng, SamplingOptions{2, 1.0}));
    grpo_step(p, ref, groups, cfg);
  }
  EXPECT_GT(std::exp(p.table().log_prob(row, tok::kComply)), start + 0.3);
}

TEST(CollectGroup, RewardFailureRejectsWholeGroup) {
  Rng rng(26);
  Policy p;
  int calls = 0;
  EXPECT_ERROR_KIND(collect_group(p, {0, 0}, 4,
                                  [&](const Generation&) -> int {
                                    if (++calls == 3) throw std::runtime_error("judge down");
                                    return 0;
                                  },
                                  rng),
                    ErrorKind::GroupRejected);
}

TEST(GrpoConfig, Validation) {
  GrpoConfig c;
  c.group_size = 1;
  EXPECT_ERROR_KIND(c.validate(), ErrorKind::Config);
  c = GrpoConfig{};
  c.clip_eps = 1.0;
  EXPECT_ERROR_KIND(c.validate(), ErrorKind::Config);
  c = GrpoConfig{};
  c.lr = 0.0;
  EXPECT_ERROR_KIND(c.validate(), ErrorKind::Config);
}
