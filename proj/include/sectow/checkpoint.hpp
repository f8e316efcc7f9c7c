#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include <zlib.h>

#include "sectow/error.hpp"
#include "sectow/fsutil.hpp"
#include "sectow/policy.hpp"

// File layout:
//   "SECTOW-CKPT v1 <role> <iter> <step> <C> <V>\n"
//   C*V little-endian IEEE-754 doubles, row major
//   CRC32 (little-endian u32) of everything above

namespace sectow {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline std::string encode_checkpoint(const Policy& policy) {
  const auto& table = policy.table();
  std::string out = "SECTOW-CKPT v1 " + std::string(to_string(policy.role())) + " " + std::to_string(policy.iteration()) +
                    " " + std::to_string(policy.step()) + " " + std::to_string(table.rows()) + " " +
                    std::to_string(table.vocab()) + "\n";
  const auto& theta = table.theta();
  const std::size_t header_len = out.size();
  out.resize(header_len + theta.size() * sizeof(double));
  std::memcpy(out.data() + header_len, theta.data(), theta.size() * sizeof(double));
  const std::uint32_t crc = crc32_of(out);
  char tail[4];
  std::memcpy(tail, &crc, 4);
  out.append(tail, 4);
  return out;
}

inline void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(policy));
}

struct CheckpointHeader {
  Role role;
  int iteration;
  std::int64_t step;
  int rows;
  int vocab;
};

// Decodes and validates. `expected_role` (when given) must match the file.
inline Policy decode_checkpoint(const std::string& bytes, std::optional<Role> expected_role = std::nullopt) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos || nl > 256) fail(ErrorKind::Checksum, "checkpoint header missing or corrupt");
  std::istringstream hs(bytes.substr(0, nl));
  std::string magic, ver, role_s;
  CheckpointHeader h{};
  if (!(hs >> magic >> ver >> role_s >> h.iteration >> h.step >> h.rows >> h.vocab) || magic != "SECTOW-CKPT" ||
      ver != "v1")
    fail(ErrorKind::Checksum, "checkpoint header corrupt");
  if (role_s == "DEFENDER")
    h.role = Role::Defender;
  else if (role_s == "ATTACKER")
    h.role = Role::Attacker;
  else
    fail(ErrorKind::Checksum, "checkpoint header names unknown role " + role_s);
  if (h.rows <= 0 || h.vocab <= 0) fail(ErrorKind::Checksum, "checkpoint header has invalid shape");

  const std::size_t n = static_cast<std::size_t>(h.rows) * static_cast<std::size_t>(h.vocab);
  const std::size_t expected = nl + 1 + n * sizeof(double) + 4;
  if (bytes.size() != expected) fail(ErrorKind::Checksum, "checkpoint truncated or padded");
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + expected - 4, 4);
  if (stored != crc32_of(std::string_view(bytes).substr(0, expected - 4)))
    fail(ErrorKind::Checksum, "checkpoint CRC32 mismatch");

  if (h.rows != kContextRows || h.vocab != kVocabSize)
    fail(ErrorKind::Shape, "checkpoint shape " + std::to_string(h.rows) + "x" + std::to_string(h.vocab) +
                               " does not match " + std::to_string(kContextRows) + "x" + std::to_string(kVocabSize));
  if (expected_role && *expected_role != h.role)
    fail(ErrorKind::RoleMismatch, "checkpoint holds a " + role_s + " policy, expected " +
                                      std::string(to_string(*expected_role)));

  Policy policy(h.role);
  auto& theta = policy.table().theta();
  std::memcpy(theta.data(), bytes.data() + nl + 1, n * sizeof(double));
  for (double x : theta)
    if (!std::isfinite(x)) fail(ErrorKind::NonFinite, "checkpoint contains non-finite parameters");
  policy.set_lineage(h.iteration, h.step);
  return policy;
}

inline Policy load_checkpoint(const std::filesystem::path& path, std::optional<Role> expected_role = std::nullopt) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "checkpoint not found: " + path.string());
  return decode_checkpoint(read_file(path), expected_role);
}

}  // namespace sectow
