#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sectow/error.hpp"

namespace sectow {

// Arena vocabulary: 4 harm topics, 12 benign tokens, 4 wrapper (framing)
// tokens and 8 specials. Ids are dense in [0, kVocabSize).
inline constexpr int kVocabSize = 28;
inline constexpr int kNumHarm = 4;
inline constexpr int kNumBenign = 12;
inline constexpr int kNumWrap = 4;
inline constexpr std::size_t kMaxQueryLength = 16;

enum class TokenClass {
  Harm,
  Benign,
  Wrap,
  Refuse,
  Comply,
  ThinkOpen,
  ThinkClose,
  AnsOpen,
  AnsClose,
  Bos,
  Eos,
};

namespace tok {
inline constexpr int kHarmBase = 0;
inline constexpr int kBenignBase = kHarmBase + kNumHarm;
inline constexpr int kWrapBase = kBenignBase + kNumBenign;
inline constexpr int kRefuse = kWrapBase + kNumWrap;
inline constexpr int kComply = kRefuse + 1;
inline constexpr int kThinkOpen = kComply + 1;
inline constexpr int kThinkClose = kThinkOpen + 1;
inline constexpr int kAnsOpen = kThinkClose + 1;
inline constexpr int kAnsClose = kAnsOpen + 1;
inline constexpr int kBos = kAnsClose + 1;
inline constexpr int kEos = kBos + 1;
static_assert(kEos == kVocabSize - 1);

// 1-based helpers matching the H1..H4 / B1..B12 / W1..W4 naming.
constexpr int harm(int i) { return kHarmBase + i - 1; }
constexpr int benign(int i) { return kBenignBase + i - 1; }
constexpr int wrap(int i) { return kWrapBase + i - 1; }
}  // namespace tok

using TokenSeq = std::vector<int>;

inline bool valid_token(int id) { return id >= 0 && id < kVocabSize; }

inline TokenClass token_class(int id) {
  if (!valid_token(id)) fail(ErrorKind::InvalidArgument, "token id out of range: " + std::to_string(id));
  if (id < tok::kBenignBase) return TokenClass::Harm;
  if (id < tok::kWrapBase) return TokenClass::Benign;
  if (id < tok::kRefuse) return TokenClass::Wrap;
  switch (id) {
    case tok::kRefuse: return TokenClass::Refuse;
    case tok::kComply: return TokenClass::Comply;
    case tok::kThinkOpen: return TokenClass::ThinkOpen;
    case tok::kThinkClose: return TokenClass::ThinkClose;
    case tok::kAnsOpen: return TokenClass::AnsOpen;
    case tok::kAnsClose: return TokenClass::AnsClose;
    case tok::kBos: return TokenClass::Bos;
    default: return TokenClass::Eos;
  }
}

inline bool is_harm(int id) { return valid_token(id) && id < tok::kBenignBase; }
inline bool is_benign(int id) { return id >= tok::kBenignBase && id < tok::kWrapBase; }
inline bool is_wrap(int id) { return id >= tok::kWrapBase && id < tok::kRefuse; }
inline bool is_query_token(int id) { return valid_token(id) && id < tok::kRefuse; }
inline bool is_tag(int id) { return id >= tok::kThinkOpen && id <= tok::kAnsClose; }

inline std::string token_name(int id) {
  switch (token_class(id)) {
    case TokenClass::Harm: return "H" + std::to_string(id - tok::kHarmBase + 1);
    case TokenClass::Benign: return "B" + std::to_string(id - tok::kBenignBase + 1);
    case TokenClass::Wrap: return "W" + std::to_string(id - tok::kWrapBase + 1);
    case TokenClass::Refuse: return "REFUSE";
    case TokenClass::Comply: return "COMPLY";
    case TokenClass::ThinkOpen: return "<think>";
    case TokenClass::ThinkClose: return "</think>";
    case TokenClass::AnsOpen: return "<answer>";
    case TokenClass::AnsClose: return "</answer>";
    case TokenClass::Bos: return "BOS";
    case TokenClass::Eos: return "EOS";
  }
  return "?";
}

inline std::optional<int> token_from_name(std::string_view name) {
  for (int id = 0; id < kVocabSize; ++id)
    if (token_name(id) == name) return id;
  return std::nullopt;
}

// Space separated token names; the text form handed to remote judges.
inline std::string render(std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) {
    if (!out.empty()) out += ' ';
    out += token_name(t);
  }
  return out;
}

}  // namespace sectow
