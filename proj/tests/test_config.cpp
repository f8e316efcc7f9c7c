#include <gtest/gtest.h>

#include "sectow/config.hpp"
#include "test_util.hpp"

using namespace sectow;

TEST(Config, DefaultsAreValid) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.coldstart_defender_steps, 300);
  EXPECT_EQ(c.coldstart_attacker_warmup_steps, 100);
  EXPECT_EQ(c.step_cap, 500);
  EXPECT_EQ(c.filter_n, 6);
  EXPECT_DOUBLE_EQ(c.thresholds.orr_max, 0.05);
  EXPECT_DOUBLE_EQ(c.thresholds.diversity_drop, 0.10);
}

TEST(Config, ParsesFlatKeys) {
  const auto c = parse_config_string(
      "# comment\n"
      "seed = 42\n"
      "K = 2\n"
      "grpo.group_size = 4   # trailing\n"
      "monitor.orr = false\n"
      "attacker.lr = 12.5\n"
      "paths.run_dir = runs/x\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.K, 2);
  EXPECT_EQ(c.grpo.group_size, 4);
  EXPECT_FALSE(c.monitor_orr);
  EXPECT_DOUBLE_EQ(c.attacker_lr, 12.5);
  EXPECT_EQ(c.run_dir, "runs/x");
}

TEST(Config, UnknownKeyIsAnError) {
  EXPECT_ERROR_KIND(parse_config_string("grpo.lr = 1\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("nonsense\n"), ErrorKind::Config);
}

TEST(Config, BadValuesAreErrors) {
  EXPECT_ERROR_KIND(parse_config_string("K = two\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("K = 0\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("filter_n = 5\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("monitor.orr = maybe\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("grpo.clip_eps = 1.5\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("iteration.defender_steps = 501\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("judge.kind = oracle\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(parse_config_string("defender.lr = 0\n"), ErrorKind::Config);
  EXPECT_ERROR_KIND(load_config("/nonexistent.conf"), ErrorKind::Config);
}

TEST(Config, SnapshotRoundTrips) {
  RunConfig c;
  c.seed = 123456789012345ULL;
  c.sft_lr = 0.1 + 0.2;  // not representable in few digits
  c.monitor_diversity = false;
  c.run_dir = "runs/snap";
  const auto text = config_snapshot(c);
  const auto back = parse_config_string(text);
  EXPECT_EQ(config_snapshot(back), text);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.sft_lr, c.sft_lr);
}
