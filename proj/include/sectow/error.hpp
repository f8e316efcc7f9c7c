#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sectow {

enum class ErrorKind {
  InvalidArgument,
  Io,
  Checksum,
  Shape,
  NonFinite,
  RoleMismatch,
  Dataset,
  Config,
  GroupRejected,
  RewardStarvation,
  Lineage,
  JudgeTransient,
  JudgeProtocol,
  JudgeConfig,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Io: return "io";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::RoleMismatch: return "role_mismatch";
    case ErrorKind::Dataset: return "dataset";
    case ErrorKind::Config: return "config";
    case ErrorKind::GroupRejected: return "group_rejected";
    case ErrorKind::RewardStarvation: return "reward_starvation";
    case ErrorKind::Lineage: return "lineage";
    case ErrorKind::JudgeTransient: return "judge_transient";
    case ErrorKind::JudgeProtocol: return "judge_protocol";
    case ErrorKind::JudgeConfig: return "judge_config";
  }
  return "unknown";
}

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::InvalidArgument, what);
}

}  // namespace sectow
