#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sectow/arena.hpp"
#include "sectow/fsutil.hpp"

namespace sectow {

using nlohmann::json;

inline json to_json(const ArenaSample& s) {
  json j;
  j["image_digest"] = s.image_digest;
  j["query"] = s.query;
  j["rejection_required"] = s.rejection_required;
  j["origin"] = std::string(to_string(s.origin));
  j["topic"] = s.topic ? json(token_name(*s.topic)) : json(nullptr);
  return j;
}

inline ArenaSample sample_from_json(const json& j) {
  try {
    ArenaSample s;
    s.image_digest = j.at("image_digest").get<int>();
    s.query = j.at("query").get<TokenSeq>();
    s.rejection_required = j.at("rejection_required").get<bool>();
    auto origin = origin_from_string(j.at("origin").get<std::string>());
    if (!origin) fail(ErrorKind::Dataset, "unknown origin");
    s.origin = *origin;
    const auto& topic = j.at("topic");
    if (!topic.is_null()) {
      auto id = token_from_name(topic.get<std::string>());
      if (!id) fail(ErrorKind::Dataset, "unknown topic token");
      s.topic = *id;
    }
    validate_sample(s);
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::Dataset, std::string("bad sample record: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Dataset) throw;
    fail(ErrorKind::Dataset, e.what());
  }
}

inline std::string dataset_to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& s : d.samples) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline Dataset dataset_from_jsonl(std::istream& in, DatasetKind kind = DatasetKind::Mixed) {
  Dataset d;
  d.kind = kind;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      d.samples.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::Dataset, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::Dataset, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_dataset(d);
  return d;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_jsonl(d));
}

inline Dataset load_dataset(const std::filesystem::path& path, DatasetKind kind = DatasetKind::Mixed) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open dataset " + path.string());
  return dataset_from_jsonl(in, kind);
}

}  // namespace sectow
