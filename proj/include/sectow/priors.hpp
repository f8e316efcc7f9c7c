#pragma once

#include "sectow/policy.hpp"
#include "sectow/tokens.hpp"

// Initial parameters standing in for the untrained base models.

namespace sectow {

// Helpful base defender: opens with COMPLY on every digest, follows with a
// benign token and stops. Refusal is rare but never impossible.
inline Policy defender_base_prior() {
  Policy p(Role::Defender);
  auto& table = p.table();
  for (int r = 0; r < table.rows(); ++r)
    for (auto& x : table.row(r)) x = -4.0;
  for (int d = 0; d < kNumDigests; ++d) {
    auto row = table.row(Policy::row_index(d, 0, tok::kBos));
    row[tok::kComply] = 4.0;
    row[tok::kRefuse] = 0.0;
  }
  auto cont = [&](int prev) { return table.row(Policy::row_index(0, 0, prev)); };
  {
    auto row = cont(tok::kComply);
    for (int b = 1; b <= kNumBenign; ++b) row[tok::benign(b)] = 2.0;
    row[tok::kEos] = 0.0;
    row[tok::kRefuse] = -1.0;
  }
  for (int b = 1; b <= kNumBenign; ++b) {
    auto row = cont(tok::benign(b));
    row[tok::kEos] = 4.0;
    for (int c = 1; c <= kNumBenign; ++c) row[tok::benign(c)] = 0.0;
    row[tok::kRefuse] = -2.0;
  }
  for (int t = 0; t < kVocabSize; ++t) {
    if (t == tok::kComply || is_benign(t) || t == tok::kBos) continue;
    cont(t)[tok::kEos] = 4.0;
  }
  return p;
}

// Prompt-following base attacker: mostly emits the think/answer frame with
// an empty or short thought and a short random query. The frame is imperfect
// (thought tokens share rows with answer tokens), so format must be learned.
inline Policy attacker_base_prior() {
  Policy p(Role::Attacker);
  auto& table = p.table();
  for (int d = 0; d < kNumDigests; ++d) {
    for (int mode = 0; mode < kNumModes; ++mode) {
      auto row = [&](int prev) { return table.row(Policy::row_index(d, mode, prev)); };
      for (int prev = 0; prev < kVocabSize; ++prev)
        for (auto& x : row(prev)) x = -3.0;

      for (auto& x : row(tok::kBos)) x = -2.0;
      row(tok::kBos)[tok::kThinkOpen] = 4.0;

      row(tok::kThinkOpen)[tok::kThinkClose] = 3.0;
      for (int b = 1; b <= kNumBenign; ++b) row(tok::kThinkOpen)[tok::benign(b)] = 0.0;

      for (auto& x : row(tok::kThinkClose)) x = -2.0;
      row(tok::kThinkClose)[tok::kAnsOpen] = 4.0;

      {
        auto r = row(tok::kAnsOpen);
        for (int h = 1; h <= kNumHarm; ++h) r[tok::harm(h)] = mode == 1 ? 2.0 : 1.0;
        for (int b = 1; b <= kNumBenign; ++b) r[tok::benign(b)] = 1.0;
        for (int w = 1; w <= kNumWrap; ++w) r[tok::wrap(w)] = 0.0;
      }
      for (int t = 0; t < tok::kRefuse; ++t) {
        auto r = row(t);
        r[tok::kAnsClose] = 2.0;
        for (int b = 1; b <= kNumBenign; ++b) r[tok::benign(b)] = 0.0;
        for (int h = 1; h <= kNumHarm; ++h) r[tok::harm(h)] = -1.0;
        for (int w = 1; w <= kNumWrap; ++w) r[tok::wrap(w)] = -1.0;
        r[tok::kThinkClose] = -2.0;
      }

      for (auto& x : row(tok::kAnsClose)) x = -2.0;
      row(tok::kAnsClose)[tok::kEos] = 4.0;
    }
  }
  return p;
}

}  // namespace sectow
