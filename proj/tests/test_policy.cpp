#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "sectow/policy.hpp"
#include "sectow/priors.hpp"
#include "sectow/training.hpp"
#include "test_util.hpp"

using namespace sectow;

namespace {

// Plain log-softmax, written independently of the library.
double oracle_log_prob(const std::vector<double>& theta, int vocab, int r, int t) {
  const double* row = theta.data() + r * vocab;
  double m = row[0];
  for (int j = 1; j < vocab; ++j) m = std::max(m, row[j]);
  double z = 0.0;
  for (int j = 0; j < vocab; ++j) z += std::exp(row[j] - m);
  return row[t] - m - std::log(z);
}

double oracle_sft_loss(const std::vector<double>& theta, int vocab, const std::vector<Trajectory>& batch) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& tr : batch)
    for (std::size_t i = 0; i < tr.tokens.size(); ++i, ++n) sum -= oracle_log_prob(theta, vocab, tr.rows[i], tr.tokens[i]);
  return sum / static_cast<double>(n);
}

TabularPolicy random_table(int rows, int vocab, Rng& rng, double scale = 1.5) {
  TabularPolicy t(rows, vocab);
  for (auto& x : t.theta()) x = scale * (2.0 * rng.uniform() - 1.0);
  return t;
}

}  // namespace

TEST(TabularPolicy, LogProbMatchesOracleAndNormalises) {
  Rng rng(1);
  auto t = random_table(6, 7, rng, 5.0);
  std::vector<double> p(7);
  for (int r = 0; r < 6; ++r) {
    t.probs(r, 1.0, p);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (int j = 0; j < 7; ++j) {
      EXPECT_NEAR(t.log_prob(r, j), oracle_log_prob(t.theta(), 7, r, j), 1e-12);
      EXPECT_NEAR(std::log(p[static_cast<std::size_t>(j)]), t.log_prob(r, j), 1e-12);
    }
  }
}

TEST(TabularPolicy, TemperatureSharpens) {
  TabularPolicy t(1, 3);
  t.row(0)[0] = 1.0;
  std::vector<double> hot(3), cold(3);
  t.probs(0, 2.0, hot);
  t.probs(0, 0.5, cold);
  EXPECT_GT(cold[0], hot[0]);
  const double z = std::exp(2.0) + 2.0;
  EXPECT_NEAR(cold[0], std::exp(2.0) / z, 1e-12);
}

TEST(TabularPolicy, StableForLargeLogits) {
  TabularPolicy t(1, 3);
  t.row(0)[0] = 800.0;
  EXPECT_NEAR(t.log_prob(0, 0), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(t.log_prob(0, 1)));
}

TEST(TabularPolicy, NonFiniteRowIsReported) {
  TabularPolicy t(2, 3);
  t.row(1)[2] = std::nan("");
  EXPECT_NO_THROW(t.check_row_finite(0));
  EXPECT_ERROR_KIND(t.check_row_finite(1), ErrorKind::NonFinite);
  EXPECT_ERROR_KIND(t.check_finite(), ErrorKind::NonFinite);
}

TEST(TabularPolicy, RowOutOfRange) {
  TabularPolicy t(2, 3);
  EXPECT_ERROR_KIND(t.row(2), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(t.log_prob(-1, 0), ErrorKind::InvalidArgument);
}

TEST(SftGradient, MatchesCentralDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 4, vocab = 5;  // 20 parameters
    auto t = random_table(rows, vocab, rng);
    std::vector<Trajectory> batch;
    for (int b = 0; b < 3; ++b) {
      Trajectory tr;
      const int len = rng.range(1, 4);
      for (int i = 0; i < len; ++i) {
        tr.rows.push_back(rng.range(0, rows - 1));
        tr.tokens.push_back(rng.range(0, vocab - 1));
      }
      batch.push_back(tr);
    }
    std::vector<double> grad;
    const double loss = sft_loss_and_gradient(t, batch, grad);
    EXPECT_NEAR(loss, oracle_sft_loss(t.theta(), vocab, batch), 1e-12);
    const double h = 1e-5;
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto plus = t.theta(), minus = t.theta();
      plus[i] += h;
      minus[i] -= h;
      const double fd = (oracle_sft_loss(plus, vocab, batch) - oracle_sft_loss(minus, vocab, batch)) / (2 * h);
      const double rel = std::abs(fd - grad[i]) / std::max(1e-8, std::max(std::abs(fd), std::abs(grad[i])));
      EXPECT_TRUE(rel <= 1e-4 || std::abs(fd - grad[i]) <= 1e-9) << "param " << i << " fd " << fd << " an " << grad[i];
    }
  }
}

TEST(SftStep, DescendsAndRejectsBadRate) {
  Rng rng(3);
  auto t = random_table(3, 4, rng);
  std::vector<Trajectory> batch{{{0, 1, 2}, {1, 2, 3}}};
  const double before = oracle_sft_loss(t.theta(), 4, batch);
  sft_step(t, batch, 0.5);
  EXPECT_LT(oracle_sft_loss(t.theta(), 4, batch), before);
  EXPECT_ERROR_KIND(sft_step(t, batch, 0.0), ErrorKind::InvalidArgument);
}

TEST(Policy, DefenderContextRows) {
  Policy p(Role::Defender);
  EXPECT_EQ(p.context_row({5, 0}, tok::kBos), Policy::row_index(5, 0, tok::kBos));
  // continuation rows ignore the digest
  EXPECT_EQ(p.context_row({5, 0}, tok::kComply), Policy::row_index(0, 0, tok::kComply));
  EXPECT_EQ(p.context_row({9, 0}, tok::kComply), p.context_row({2, 0}, tok::kComply));
  EXPECT_ERROR_KIND(p.context_row({5, 1}, tok::kBos), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(p.context_row({16, 0}, tok::kBos), ErrorKind::InvalidArgument);
}

TEST(Policy, AttackerContextRows) {
  Policy p(Role::Attacker);
  EXPECT_EQ(p.context_row({3, 1}, tok::kBos), Policy::row_index(3, 1, tok::kBos));
  EXPECT_EQ(p.context_row({3, 1}, tok::kAnsOpen), Policy::row_index(3, 1, tok::kAnsOpen));
  EXPECT_EQ(p.context_row({3, 1}, tok::benign(2)), Policy::row_index(0, 1, tok::benign(2)));
  EXPECT_NE(p.context_row({3, 0}, tok::benign(2)), p.context_row({3, 1}, tok::benign(2)));
  for (int d = 0; d < kNumDigests; ++d)
    for (int m = 0; m < kNumModes; ++m)
      for (int prev = 0; prev < kVocabSize; ++prev) {
        const int r = p.context_row({d, m}, prev);
        EXPECT_GE(r, 0);
        EXPECT_LT(r, kContextRows);
      }
}

TEST(Policy, SamplingIsSeededAndRecordsRows) {
  const auto p = attacker_base_prior();
  Rng a(4), b(4);
  for (int i = 0; i < 20; ++i) {
    const auto ga = sample(p, {i % 16, i % 2}, 24, 1.0, a);
    const auto gb = sample(p, {i % 16, i % 2}, 24, 1.0, b);
    EXPECT_EQ(ga.tokens, gb.tokens);
    EXPECT_EQ(ga.rows, context_rows(p, {i % 16, i % 2}, ga.tokens));
    const auto sc = score(p, {i % 16, i % 2}, ga.tokens);
    EXPECT_NEAR(sc.total_logprob, ga.total_logprob, 1e-12);
    EXPECT_LE(ga.tokens.size(), 24u);
  }
}

TEST(Policy, SampleStopsAtEos) {
  Policy p(Role::Defender);
  for (int r = 0; r < kContextRows; ++r) p.table().row(r)[tok::kEos] = 50.0;
  Rng rng(5);
  const auto g = sample(p, {0, 0}, 8, 1.0, rng);
  EXPECT_EQ(g.tokens, TokenSeq{tok::kEos});
}

TEST(Policy, LogProbRejectsBadTokens) {
  Policy p;
  EXPECT_ERROR_KIND(log_prob(p, {0, 0}, TokenSeq{}), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(log_prob(p, {0, 0}, TokenSeq{28}), ErrorKind::InvalidArgument);
}

TEST(Priors, BaseDefenderCompliesEverywhere) {
  const auto p = defender_base_prior();
  for (int d = 0; d < kNumDigests; ++d) {
    const double comply = std::exp(p.table().log_prob(Policy::row_index(d, 0, tok::kBos), tok::kComply));
    EXPECT_GT(comply, 0.9);
  }
}

TEST(ColdStart, LearnsRefuseAndComply) {
  const auto seeds = gen_seed_datasets(3, 120, 120, 0.05);
  const auto run = cold_start_defender(defender_base_prior(), concat(seeds.jailbreak, seeds.general), 200, 0.5);
  ASSERT_EQ(run.losses.size(), 200u);
  EXPECT_LT(run.losses.back(), run.losses.front());
  EXPECT_EQ(run.policy.iteration(), 0);
  EXPECT_EQ(run.policy.step(), 200);
  // bare harm digest now refuses, benign digest complies
  const auto& t = run.policy.table();
  EXPECT_GT(t.log_prob(Policy::row_index(1, 0, tok::kBos), tok::kRefuse), std::log(0.8));
  EXPECT_GT(t.log_prob(Policy::row_index(0, 0, tok::kBos), tok::kComply), std::log(0.9));
  const auto same = cold_start_defender(defender_base_prior(), seeds.jailbreak, 0, 0.5);
  EXPECT_EQ(same.policy, defender_base_prior());
}

TEST(Policy, UniformRowAndShiftInvariance) {
  Policy p(Role::Attacker);
  const TokenSeq toks{tok::kThinkOpen, tok::benign(2), tok::kEos};
  for (double lp : log_prob(p, {1, 0}, toks)) EXPECT_NEAR(lp, -std::log(28.0), 1e-12);
  Rng rng(6);
  for (auto& x : p.table().theta()) x = rng.uniform() * 4.0;
  const auto before = log_prob(p, {1, 0}, toks);
  for (int r : context_rows(p, {1, 0}, toks))
    for (auto& x : p.table().row(r)) x += 17.0;
  const auto after = log_prob(p, {1, 0}, toks);
  for (std::size_t i = 0; i < toks.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-12);
}

TEST(SftStep, UniformInitLossAndMonotoneDescent) {
  Policy p(Role::Defender);
  const std::vector<SftExample> batch{{{4, 0}, {tok::kRefuse}}};
  double prev = sft_step(p, batch, 0.1).loss;
  EXPECT_NEAR(prev, std::log(28.0), 1e-12);
  for (int i = 0; i < 100; ++i) {
    const double loss = sft_step(p, batch, 0.1).loss;
    EXPECT_LE(loss, prev);
    prev = loss;
  }
}
