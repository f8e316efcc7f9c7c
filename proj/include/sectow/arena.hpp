#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sectow/error.hpp"
#include "sectow/rng.hpp"
#include "sectow/tokens.hpp"

namespace sectow {

inline constexpr int kNumDigests = 16;

enum class Origin { SeedJailbreak, SeedGeneral, AttackerNew, AttackerRefined };
enum class DatasetKind { Jailbreak, General, Mixed };

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::SeedJailbreak: return "SEED_JAILBREAK";
    case Origin::SeedGeneral: return "SEED_GENERAL";
    case Origin::AttackerNew: return "ATTACKER_NEW";
    case Origin::AttackerRefined: return "ATTACKER_REFINED";
  }
  return "?";
}

inline std::optional<Origin> origin_from_string(std::string_view s) {
  for (Origin o : {Origin::SeedJailbreak, Origin::SeedGeneral, Origin::AttackerNew, Origin::AttackerRefined})
    if (to_string(o) == s) return o;
  return std::nullopt;
}

inline void validate_query(std::span<const int> query) {
  if (query.empty() || query.size() > kMaxQueryLength)
    fail(ErrorKind::InvalidArgument, "query length must be in [1, 16], got " + std::to_string(query.size()));
  for (int t : query) {
    if (!valid_token(t)) fail(ErrorKind::InvalidArgument, "malformed token id " + std::to_string(t));
    if (!is_query_token(t)) fail(ErrorKind::InvalidArgument, "token " + token_name(t) + " cannot appear in a query");
  }
}

// Ground truth: a query is harmful iff it carries a harm token, wrapped or not.
inline bool harm_oracle(std::span<const int> query) {
  validate_query(query);
  return std::any_of(query.begin(), query.end(), is_harm);
}

// 4-bit feature digest the defender conditions on:
//   bit0  some harm token not directly preceded by a wrapper
//   bit1  some wrapper directly followed by a harm token
//   bit2  at least two harm tokens
//   bit3  even query length
inline int query_digest(std::span<const int> query) {
  validate_query(query);
  bool bare_harm = false, wrapped_harm = false;
  int harm_count = 0;
  for (std::size_t i = 0; i < query.size(); ++i) {
    if (!is_harm(query[i])) continue;
    ++harm_count;
    if (i > 0 && is_wrap(query[i - 1]))
      wrapped_harm = true;
    else
      bare_harm = true;
  }
  int digest = 0;
  if (bare_harm) digest |= 1;
  if (wrapped_harm) digest |= 2;
  if (harm_count >= 2) digest |= 4;
  if (query.size() % 2 == 0) digest |= 8;
  return digest;
}

struct ArenaSample {
  int image_digest = 0;
  TokenSeq query;
  bool rejection_required = false;
  Origin origin = Origin::SeedGeneral;
  std::optional<int> topic;  // harm token id, jailbreak samples only

  friend bool operator==(const ArenaSample&, const ArenaSample&) = default;
};

// The label is derived from the query, never supplied.
inline ArenaSample make_sample(int image_digest, TokenSeq query, Origin origin) {
  if (image_digest < 0 || image_digest >= kNumDigests)
    fail(ErrorKind::InvalidArgument, "image digest out of range: " + std::to_string(image_digest));
  ArenaSample s;
  s.image_digest = image_digest;
  s.rejection_required = harm_oracle(query);
  if ((origin == Origin::SeedGeneral) && s.rejection_required)
    fail(ErrorKind::InvalidArgument, "general sample contains a harm token");
  if (s.rejection_required) {
    s.topic = *std::find_if(query.begin(), query.end(), is_harm);
  }
  s.query = std::move(query);
  s.origin = origin;
  return s;
}

// Checks every invariant of a sample built elsewhere (e.g. parsed from disk).
inline void validate_sample(const ArenaSample& s) {
  if (s.image_digest < 0 || s.image_digest >= kNumDigests)
    fail(ErrorKind::Dataset, "image digest out of range");
  validate_query(s.query);
  const bool harmful = harm_oracle(s.query);
  if (harmful != s.rejection_required) fail(ErrorKind::Dataset, "rejection_required disagrees with query content");
  if (s.origin == Origin::SeedGeneral && harmful) fail(ErrorKind::Dataset, "general sample contains a harm token");
  if (s.topic && (!is_harm(*s.topic) || !harmful)) fail(ErrorKind::Dataset, "topic must be a harm token of a harmful query");
}

struct Dataset {
  std::vector<ArenaSample> samples;
  DatasetKind kind = DatasetKind::Mixed;
  std::optional<int> split_id;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline void validate_dataset(const Dataset& d) {
  for (const auto& s : d.samples) {
    validate_sample(s);
    if (d.kind == DatasetKind::Jailbreak && !s.rejection_required)
      fail(ErrorKind::Dataset, "jailbreak dataset holds a benign sample");
    if (d.kind == DatasetKind::General && s.rejection_required)
      fail(ErrorKind::Dataset, "general dataset holds a harmful sample");
  }
}

// True when every harm token of the query sits directly after a wrapper.
inline bool fully_wrapped(std::span<const int> query) {
  bool any = false;
  for (std::size_t i = 0; i < query.size(); ++i) {
    if (!is_harm(query[i])) continue;
    any = true;
    if (i == 0 || !is_wrap(query[i - 1])) return false;
  }
  return any;
}

inline bool has_wrapped_harm(std::span<const int> query) { return (query_digest(query) & 2) != 0; }

namespace detail {

inline int random_benign(Rng& rng) { return tok::benign(rng.range(1, kNumBenign)); }
inline int random_harm(Rng& rng) { return tok::harm(rng.range(1, kNumHarm)); }
inline int random_wrap(Rng& rng) { return tok::wrap(rng.range(1, kNumWrap)); }

// Filler units: a benign token, occasionally behind a harmless wrapper.
inline std::vector<TokenSeq> filler_units(Rng& rng, int count) {
  std::vector<TokenSeq> units;
  for (int i = 0; i < count; ++i) {
    if (rng.bernoulli(0.15))
      units.push_back({random_wrap(rng), random_benign(rng)});
    else
      units.push_back({random_benign(rng)});
  }
  return units;
}

inline TokenSeq concat_shuffled(Rng& rng, std::vector<TokenSeq> units) {
  rng.shuffle(units);
  TokenSeq q;
  for (auto& u : units) q.insert(q.end(), u.begin(), u.end());
  return q;
}

}  // namespace detail

// A harmful query with 1-2 harm tokens; `wrapped` puts a wrapper in front of
// every harm token.
inline TokenSeq make_jailbreak_query(Rng& rng, bool wrapped) {
  const int n_harm = rng.bernoulli(0.3) ? 2 : 1;
  auto units = detail::filler_units(rng, rng.range(0, 5));
  for (int i = 0; i < n_harm; ++i) {
    if (wrapped)
      units.push_back({detail::random_wrap(rng), detail::random_harm(rng)});
    else
      units.push_back({detail::random_harm(rng)});
  }
  return detail::concat_shuffled(rng, std::move(units));
}

inline TokenSeq make_general_query(Rng& rng) {
  return detail::concat_shuffled(rng, detail::filler_units(rng, rng.range(1, 6)));
}

// Jailbreak set with an exact wrapped share (rounded), order shuffled.
inline Dataset gen_jailbreak_set(Rng& rng, std::size_t n, double wrapped_fraction, Origin origin = Origin::SeedJailbreak) {
  const auto n_wrapped = static_cast<std::size_t>(wrapped_fraction * static_cast<double>(n) + 0.5);
  std::vector<bool> style(n, false);
  std::fill(style.begin(), style.begin() + static_cast<std::ptrdiff_t>(std::min(n_wrapped, n)), true);
  rng.shuffle(style);
  Dataset d;
  d.kind = DatasetKind::Jailbreak;
  for (std::size_t i = 0; i < n; ++i) {
    const int image = rng.range(0, kNumDigests - 1);
    d.samples.push_back(make_sample(image, make_jailbreak_query(rng, style[i]), origin));
  }
  return d;
}

inline Dataset gen_general_set(Rng& rng, std::size_t n) {
  Dataset d;
  d.kind = DatasetKind::General;
  for (std::size_t i = 0; i < n; ++i) {
    const int image = rng.range(0, kNumDigests - 1);
    d.samples.push_back(make_sample(image, make_general_query(rng), Origin::SeedGeneral));
  }
  return d;
}

inline constexpr double kSeedWrappedFraction = 0.05;

struct SeedDatasets {
  Dataset jailbreak;
  Dataset general;
};

inline SeedDatasets gen_seed_datasets(std::uint64_t seed, std::size_t n_jailbreak, std::size_t n_general,
                                      double wrapped_fraction = kSeedWrappedFraction) {
  if (n_jailbreak == 0 || n_general == 0) fail(ErrorKind::InvalidArgument, "seed dataset sizes must be positive");
  require(wrapped_fraction >= 0.0 && wrapped_fraction <= 0.2, "seed wrapped fraction must be in [0, 0.2]");
  Rng jb_rng(derive_seed(seed, "seed-jailbreak"));
  Rng gen_rng(derive_seed(seed, "seed-general"));
  return {gen_jailbreak_set(jb_rng, n_jailbreak, wrapped_fraction), gen_general_set(gen_rng, n_general)};
}

// Disjoint, seeded, balanced split into K parts (first n % K parts one larger).
inline std::vector<Dataset> partition(const Dataset& dataset, int K, std::uint64_t seed) {
  if (K <= 0) fail(ErrorKind::InvalidArgument, "partition count must be positive");
  if (dataset.size() < static_cast<std::size_t>(K))
    fail(ErrorKind::InvalidArgument, "dataset smaller than partition count");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t base = dataset.size() / static_cast<std::size_t>(K);
  const std::size_t extra = dataset.size() % static_cast<std::size_t>(K);
  std::vector<Dataset> parts;
  std::size_t pos = 0;
  for (int k = 0; k < K; ++k) {
    Dataset part;
    part.kind = dataset.kind;
    part.split_id = k + 1;
    const std::size_t len = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) part.samples.push_back(dataset.samples[order[pos++]]);
    parts.push_back(std::move(part));
  }
  return parts;
}

inline Dataset concat(const Dataset& a, const Dataset& b, DatasetKind kind = DatasetKind::Mixed) {
  Dataset out;
  out.kind = kind;
  out.split_id = a.split_id;
  out.samples = a.samples;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

inline Dataset filter(const Dataset& d, bool rejection_required) {
  Dataset out;
  out.kind = rejection_required ? DatasetKind::Jailbreak : DatasetKind::General;
  out.split_id = d.split_id;
  for (const auto& s : d.samples)
    if (s.rejection_required == rejection_required) out.samples.push_back(s);
  return out;
}

inline Dataset head(const Dataset& d, std::size_t n) {
  Dataset out = d;
  out.samples.resize(std::min(n, d.size()));
  return out;
}

// Order-preserving split; the first `fraction` of the samples train.
inline std::pair<Dataset, Dataset> train_val_split(const Dataset& d, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, "train fraction must be in (0, 1)");
  const auto n_train = static_cast<std::size_t>(fraction * static_cast<double>(d.size()));
  Dataset train = d, val = d;
  train.samples.assign(d.samples.begin(), d.samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  val.samples.assign(d.samples.begin() + static_cast<std::ptrdiff_t>(n_train), d.samples.end());
  return {std::move(train), std::move(val)};
}

}  // namespace sectow
