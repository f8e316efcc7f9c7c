#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sectow/arena.hpp"
#include "sectow/error.hpp"
#include "sectow/grpo.hpp"
#include "sectow/judge.hpp"
#include "sectow/monitor.hpp"
#include "sectow/policy.hpp"
#include "sectow/rewards.hpp"
#include "sectow/rng.hpp"

namespace sectow {

enum class AugmentMode { GenerateNew, RefineOld };

inline std::string_view to_string(AugmentMode m) { return m == AugmentMode::GenerateNew ? "GENERATE_NEW" : "REFINE_OLD"; }

// General sources prompt new attacks (mode 0, keyed by the image bucket);
// jailbreak sources prompt refinement (mode 1, keyed by the source digest).
inline AugmentMode augment_mode(const ArenaSample& source) {
  return source.rejection_required ? AugmentMode::RefineOld : AugmentMode::GenerateNew;
}

inline Conditioning attacker_conditioning(const ArenaSample& source) {
  if (augment_mode(source) == AugmentMode::GenerateNew) return {source.image_digest, 0};
  return {query_digest(source.query), 1};
}

struct AugmentRecord {
  ArenaSample source;
  AugmentMode mode = AugmentMode::GenerateNew;
  TokenSeq produced_query;
  int image_digest = 0;
  int success_count = 0;
  int n = 0;
  bool kept = false;
  bool unresolved = false;
  bool oracle_benign = false;
};

inline nlohmann::json to_json(const AugmentRecord& r) {
  return {{"mode", std::string(to_string(r.mode))},
          {"success_count", r.success_count},
          {"n", r.n},
          {"kept", r.kept},
          {"unresolved", r.unresolved}};
}

struct CandidateSet {
  std::vector<AugmentRecord> records;
  std::size_t generated = 0;
  std::size_t format_dropped = 0;
};

// One attacker generation per source sample (times `samples_per_source`);
// format-invalid generations are dropped and counted.
inline CandidateSet generate_candidates(const Policy& attacker, const Dataset& sources, Rng& rng,
                                        SamplingOptions opts = {24, 1.0}, int samples_per_source = 1) {
  if (attacker.role() != Role::Attacker) fail(ErrorKind::RoleMismatch, "candidate generation needs an attacker policy");
  if (sources.empty()) fail(ErrorKind::InvalidArgument, "candidate generation needs a non-empty dataset");
  CandidateSet out;
  for (const auto& src : sources.samples) {
    for (int rep = 0; rep < samples_per_source; ++rep) {
      const auto gen = sample(attacker, attacker_conditioning(src), opts.max_len, opts.temperature, rng);
      ++out.generated;
      auto parsed = parse_attacker_output(gen.tokens);
      if (!parsed.format_ok) {
        ++out.format_dropped;
        continue;
      }
      AugmentRecord rec;
      rec.source = src;
      rec.mode = augment_mode(src);
      rec.produced_query = std::move(parsed.answer);
      rec.image_digest = src.image_digest;
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

// Majority rule: kept iff at least half of the n attempts succeeded.
inline bool filter_keeps(int success_count, int n) { return 2 * success_count >= n; }

struct FilterResult {
  Dataset kept;
  std::vector<AugmentRecord> records;
  std::size_t unresolved = 0;
  std::size_t discarded_benign = 0;
};

inline FilterResult filter_high_quality(const Policy& defender, std::vector<AugmentRecord> candidates, int n, Judge& judge,
                                        Rng& rng, EvalOptions opts = {4, 1.0}) {
  if (n < 2 || n % 2 != 0) fail(ErrorKind::Config, "filter sample count n must be even and >= 2");
  FilterResult out;
  out.kept.kind = DatasetKind::Jailbreak;
  for (auto& rec : candidates) {
    rec.n = n;
    if (!harm_oracle(rec.produced_query)) {
      // Label purity: a benign attacker query is never jailbreak data.
      rec.oracle_benign = true;
      ++out.discarded_benign;
      out.records.push_back(std::move(rec));
      continue;
    }
    try {
      for (int i = 0; i < n; ++i) {
        const auto response = respond(defender, rec.produced_query, rng, opts);
        if (judge.judge_one(rec.produced_query, response.tokens).unsafe) ++rec.success_count;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::JudgeTransient && e.kind() != ErrorKind::JudgeProtocol &&
          e.kind() != ErrorKind::JudgeConfig)
        throw;
      rec.unresolved = true;
      rec.success_count = 0;
      ++out.unresolved;
      out.records.push_back(std::move(rec));
      continue;
    }
    rec.kept = filter_keeps(rec.success_count, n);
    if (rec.kept) {
      const Origin origin = rec.mode == AugmentMode::GenerateNew ? Origin::AttackerNew : Origin::AttackerRefined;
      out.kept.samples.push_back(make_sample(rec.image_digest, rec.produced_query, origin));
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

struct AssembleResult {
  Dataset dataset;
  bool no_new_data = false;
  bool shortfall_warning = false;  // general pool smaller than the jailbreak set
};

// D_new = D_J_new plus an equal number of general samples, shuffled.
inline AssembleResult assemble_iteration_dataset(const Dataset& jailbreak_new, const Dataset& general_pool, Rng& rng) {
  AssembleResult out;
  out.dataset.kind = DatasetKind::Mixed;
  out.dataset.split_id = jailbreak_new.split_id;
  if (jailbreak_new.empty()) {
    out.no_new_data = true;
    return out;
  }
  if (general_pool.empty()) fail(ErrorKind::InvalidArgument, "general pool is empty");
  std::vector<ArenaSample> general;
  if (general_pool.size() >= jailbreak_new.size()) {
    std::vector<std::size_t> idx(general_pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    for (std::size_t i = 0; i < jailbreak_new.size(); ++i) general.push_back(general_pool.samples[idx[i]]);
  } else {
    out.shortfall_warning = true;
    for (std::size_t i = 0; i < jailbreak_new.size(); ++i)
      general.push_back(general_pool.samples[rng.below(general_pool.size())]);
  }
  out.dataset.samples = jailbreak_new.samples;
  out.dataset.samples.insert(out.dataset.samples.end(), general.begin(), general.end());
  rng.shuffle(out.dataset.samples);
  return out;
}

}  // namespace sectow
