#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "sectow/arena.hpp"
#include "sectow/dataset_io.hpp"
#include "test_util.hpp"

using namespace sectow;

namespace {

TokenSeq random_query(Rng& rng) {
  TokenSeq q(static_cast<std::size_t>(rng.range(1, static_cast<int>(kMaxQueryLength))));
  for (auto& t : q) t = rng.range(0, tok::kRefuse - 1);
  return q;
}

// Independent restatement of the digest definition, scanning by pairs.
int digest_oracle(const TokenSeq& q) {
  bool bare = false, wrapped = false;
  int harms = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const bool h = q[i] >= tok::harm(1) && q[i] <= tok::harm(kNumHarm);
    if (!h) continue;
    ++harms;
    const bool after_wrap = i > 0 && q[i - 1] >= tok::wrap(1) && q[i - 1] <= tok::wrap(kNumWrap);
    (after_wrap ? wrapped : bare) = true;
  }
  return (bare ? 1 : 0) | (wrapped ? 2 : 0) | (harms >= 2 ? 4 : 0) | (q.size() % 2 == 0 ? 8 : 0);
}

}  // namespace

TEST(Tokens, LayoutAndNames) {
  EXPECT_EQ(kVocabSize, 28);
  EXPECT_EQ(tok::harm(1), 0);
  EXPECT_EQ(tok::benign(1), 4);
  EXPECT_EQ(tok::wrap(1), 16);
  EXPECT_EQ(tok::kRefuse, 20);
  EXPECT_EQ(tok::kEos, 27);
  for (int t = 0; t < kVocabSize; ++t) EXPECT_EQ(token_from_name(token_name(t)), t);
  EXPECT_FALSE(token_from_name("nope").has_value());
}

TEST(Arena, DigestMatchesOracleOnRandomQueries) {
  Rng rng(11);
  for (int i = 0; i < 5000; ++i) {
    const auto q = random_query(rng);
    ASSERT_EQ(query_digest(q), digest_oracle(q)) << render(q);
  }
}

TEST(Arena, DigestSeparatesHarmfulFromBenign) {
  Rng rng(12);
  for (int i = 0; i < 5000; ++i) {
    const auto q = random_query(rng);
    EXPECT_EQ(harm_oracle(q), (query_digest(q) & 3) != 0);
  }
}

TEST(Arena, DigestExamples) {
  using namespace tok;
  EXPECT_EQ(query_digest(TokenSeq{benign(1)}), 0);
  EXPECT_EQ(query_digest(TokenSeq{harm(1), benign(2)}), 1 | 8);
  EXPECT_EQ(query_digest(TokenSeq{wrap(1), harm(2), benign(3)}), 2);
  EXPECT_EQ(query_digest(TokenSeq{wrap(1), harm(2), harm(3), benign(1)}), 1 | 2 | 4 | 8);
  EXPECT_EQ(query_digest(TokenSeq{harm(1), wrap(1)}), 1 | 8);  // wrapper after the harm does not wrap it
}

TEST(Arena, QueryValidation) {
  EXPECT_ERROR_KIND(validate_query(TokenSeq{}), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(validate_query(TokenSeq(17, tok::benign(1))), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(validate_query(TokenSeq{tok::kRefuse}), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(validate_query(TokenSeq{99}), ErrorKind::InvalidArgument);
  EXPECT_NO_THROW(validate_query(TokenSeq(16, tok::benign(1))));
}

TEST(Arena, SampleLabelIsDerived) {
  const auto s = make_sample(3, {tok::benign(1), tok::harm(2)}, Origin::SeedJailbreak);
  EXPECT_TRUE(s.rejection_required);
  EXPECT_EQ(s.topic, tok::harm(2));
  EXPECT_FALSE(make_sample(3, {tok::benign(1)}, Origin::AttackerNew).rejection_required);
  EXPECT_ERROR_KIND(make_sample(3, {tok::harm(1)}, Origin::SeedGeneral), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(make_sample(16, {tok::benign(1)}, Origin::SeedGeneral), ErrorKind::InvalidArgument);
}

TEST(Arena, SeedDatasetsAreDeterministicAndLabelled) {
  const auto a = gen_seed_datasets(5, 200, 300, 0.05);
  const auto b = gen_seed_datasets(5, 200, 300, 0.05);
  EXPECT_EQ(a.jailbreak, b.jailbreak);
  EXPECT_EQ(a.general, b.general);
  EXPECT_NE(gen_seed_datasets(6, 200, 300).jailbreak, a.jailbreak);
  EXPECT_NO_THROW(validate_dataset(a.jailbreak));
  EXPECT_NO_THROW(validate_dataset(a.general));
  int wrapped = 0;
  for (const auto& s : a.jailbreak.samples) {
    EXPECT_TRUE(s.rejection_required);
    if (fully_wrapped(s.query)) ++wrapped;
  }
  EXPECT_EQ(wrapped, 10);  // exact rounded share
  for (const auto& s : a.general.samples) EXPECT_FALSE(s.rejection_required);
}

TEST(Arena, PartitionIsDisjointBalancedAndComplete) {
  const auto d = gen_seed_datasets(7, 101, 10).jailbreak;
  for (int K : {1, 2, 3, 7}) {
    const auto parts = partition(d, K, 99);
    ASSERT_EQ(parts.size(), static_cast<std::size_t>(K));
    std::multiset<std::string> all, got;
    for (const auto& s : d.samples) all.insert(to_json(s).dump());
    std::size_t lo = d.size(), hi = 0;
    for (int k = 0; k < K; ++k) {
      EXPECT_EQ(parts[static_cast<std::size_t>(k)].split_id, k + 1);
      lo = std::min(lo, parts[static_cast<std::size_t>(k)].size());
      hi = std::max(hi, parts[static_cast<std::size_t>(k)].size());
      for (const auto& s : parts[static_cast<std::size_t>(k)].samples) got.insert(to_json(s).dump());
    }
    EXPECT_LE(hi - lo, 1u);
    EXPECT_EQ(all, got);
  }
  EXPECT_EQ(partition(d, 3, 1), partition(d, 3, 1));
  EXPECT_ERROR_KIND(partition(d, 0, 1), ErrorKind::InvalidArgument);
  EXPECT_ERROR_KIND(partition(head(d, 2), 3, 1), ErrorKind::InvalidArgument);
}

TEST(Arena, PartitionIndicesArePairwiseDisjoint) {
  // Tag each sample by position through its image digest + query to make
  // duplicates impossible, then check no index lands in two parts.
  Dataset d;
  for (int i = 0; i < 60; ++i) {
    TokenSeq q;
    int x = i;
    do {
      q.push_back(tok::benign(1 + x % kNumBenign));
      x /= kNumBenign;
    } while (x > 0);
    d.samples.push_back(make_sample(0, q, Origin::SeedGeneral));
  }
  const auto parts = partition(d, 4, 3);
  std::set<TokenSeq> seen;
  for (const auto& p : parts)
    for (const auto& s : p.samples) EXPECT_TRUE(seen.insert(s.query).second);
  EXPECT_EQ(seen.size(), 60u);
}

TEST(Arena, TrainValSplitPreservesOrder) {
  const auto d = gen_seed_datasets(8, 50, 10).jailbreak;
  const auto [tr, va] = train_val_split(d, 0.8);
  EXPECT_EQ(tr.size(), 40u);
  EXPECT_EQ(va.size(), 10u);
  EXPECT_EQ(concat(tr, va, DatasetKind::Jailbreak).samples, d.samples);
}

TEST(DatasetIo, JsonlRoundTrip) {
  const auto seeds = gen_seed_datasets(9, 30, 30);
  const auto both = concat(seeds.jailbreak, seeds.general);
  std::istringstream in(dataset_to_jsonl(both));
  const auto back = dataset_from_jsonl(in);
  EXPECT_EQ(back.samples, both.samples);
}

TEST(DatasetIo, RejectsInconsistentLabel) {
  std::istringstream in(
      R"({"image_digest":0,"query":[0],"rejection_required":false,"origin":"SEED_JAILBREAK","topic":null})"
      "\n");
  EXPECT_ERROR_KIND(dataset_from_jsonl(in), ErrorKind::Dataset);
}
