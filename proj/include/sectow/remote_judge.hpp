#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sectow/error.hpp"
#include "sectow/judge.hpp"

// Wire protocol:
//   POST /v1/judge  {"items":[{"id": str, "query": str, "response": str}, ...]}
//   200             {"items":[{"id": str, "unsafe": bool}, ...]}
// Items are matched by id; the server may answer in any order.

namespace sectow {

struct RemoteJudgeConfig {
  std::string endpoint_url;  // scheme://host:port
  int timeout_ms = 5000;     // total deadline for one request, retries included
  int max_retries = 3;
  int backoff_initial_ms = 250;
  std::size_t max_batch = 32;

  // SECTOW_JUDGE_URL overrides the configured endpoint.
  void apply_env() {
    if (const char* url = std::getenv("SECTOW_JUDGE_URL"); url && *url) endpoint_url = url;
  }

  void validate() const {
    if (endpoint_url.empty()) fail(ErrorKind::Config, "judge.endpoint_url is empty");
    if (timeout_ms <= 0) fail(ErrorKind::Config, "judge.timeout_ms must be positive");
    if (max_retries < 0) fail(ErrorKind::Config, "judge.max_retries must be >= 0");
    if (max_batch == 0 || max_batch > 32) fail(ErrorKind::Config, "judge batch size must be in [1, 32]");
  }
};

struct TextJudgeItem {
  std::string query;
  std::string response;
};

class RemoteJudgeClient {
 public:
  explicit RemoteJudgeClient(RemoteJudgeConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const RemoteJudgeConfig& config() const { return cfg_; }

  // Retries spent by the most recent request, and across the client's life.
  int last_retry_count() const { return last_retries_.load(); }
  long total_retry_count() const { return total_retries_.load(); }

  // Order-preserving; splits into requests of at most max_batch items.
  std::vector<JudgeVerdict> judge(std::span<const TextJudgeItem> items) {
    std::vector<JudgeVerdict> out;
    out.reserve(items.size());
    for (std::size_t pos = 0; pos < items.size(); pos += cfg_.max_batch) {
      const auto batch = items.subspan(pos, std::min(cfg_.max_batch, items.size() - pos));
      auto verdicts = request(batch);
      out.insert(out.end(), verdicts.begin(), verdicts.end());
    }
    return out;
  }

  JudgeVerdict judge_one(const std::string& query, const std::string& response) {
    if (query.empty() || response.empty()) fail(ErrorKind::InvalidArgument, "judge texts must be non-empty");
    const TextJudgeItem item{query, response};
    return judge(std::span<const TextJudgeItem>(&item, 1)).at(0);
  }

 private:
  std::vector<JudgeVerdict> request(std::span<const TextJudgeItem> batch) {
    using clock = std::chrono::steady_clock;
    nlohmann::json body;
    body["items"] = nlohmann::json::array();
    for (std::size_t i = 0; i < batch.size(); ++i)
      body["items"].push_back({{"id", std::to_string(i)}, {"query", batch[i].query}, {"response", batch[i].response}});
    const std::string payload = body.dump();

    const auto start = clock::now();
    const auto deadline = start + std::chrono::milliseconds(cfg_.timeout_ms);
    const auto attempt_budget = std::chrono::milliseconds(std::max(1, cfg_.timeout_ms / (cfg_.max_retries + 1)));
    auto backoff = std::chrono::milliseconds(cfg_.backoff_initial_ms);
    std::string last_error = "no attempt made";
    int retries = 0;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        if (clock::now() + backoff >= deadline) break;
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
        ++retries;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
      if (remaining.count() <= 0) break;
      const auto budget = std::min(attempt_budget, remaining);

      httplib::Client client(cfg_.endpoint_url);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(budget));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(budget));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(budget));
      auto res = client.Post("/v1/judge", payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 400 && res->status < 500) {
        record(retries);
        fail(ErrorKind::JudgeConfig, "judge endpoint rejected the request with HTTP " + std::to_string(res->status));
      }
      if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      record(retries);
      const auto latency =
          std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start).count();
      return decode(res->body, batch.size(), latency);
    }
    record(retries);
    fail(ErrorKind::JudgeTransient, "judge request failed after " + std::to_string(retries) + " retries: " + last_error);
  }

  void record(int retries) {
    last_retries_ = retries;
    total_retries_ += retries;
  }

  static std::vector<JudgeVerdict> decode(const std::string& body, std::size_t n, std::int64_t latency) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::JudgeProtocol, std::string("response is not JSON: ") + e.what());
    }
    std::vector<JudgeVerdict> out(n, JudgeVerdict{false, VerdictSource::Remote, latency});
    // A bare {"unsafe": bool} is accepted for single-item requests.
    if (n == 1 && j.is_object() && !j.contains("items") && j.contains("unsafe") && j["unsafe"].is_boolean()) {
      out[0].unsafe = j["unsafe"].get<bool>();
      return out;
    }
    if (!j.is_object() || !j.contains("items") || !j["items"].is_array())
      fail(ErrorKind::JudgeProtocol, "response lacks an items array");
    std::vector<bool> seen(n, false);
    for (const auto& item : j["items"]) {
      if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains("unsafe") ||
          !item["unsafe"].is_boolean())
        fail(ErrorKind::JudgeProtocol, "malformed response item");
      const auto& id = item["id"].get_ref<const std::string&>();
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(id, &used);
        if (used != id.size()) throw std::invalid_argument(id);
      } catch (const std::exception&) {
        fail(ErrorKind::JudgeProtocol, "unknown response id '" + id + "'");
      }
      if (idx >= n || seen[idx]) fail(ErrorKind::JudgeProtocol, "unknown or duplicate response id '" + id + "'");
      seen[idx] = true;
      out[idx].unsafe = item["unsafe"].get<bool>();
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      fail(ErrorKind::JudgeProtocol, "response is missing items");
    return out;
  }

  RemoteJudgeConfig cfg_;
  std::atomic<int> last_retries_{0};
  std::atomic<long> total_retries_{0};
};

// Token-level adapter: renders arena sequences as text for a remote guard.
class RemoteJudge final : public Judge {
 public:
  explicit RemoteJudge(RemoteJudgeConfig cfg) : client_(std::move(cfg)) {}

  RemoteJudgeClient& client() { return client_; }

  std::vector<JudgeVerdict> judge(std::span<const JudgeItem> items) override {
    std::vector<TextJudgeItem> text;
    text.reserve(items.size());
    for (const auto& it : items) text.push_back({render(it.query), render(it.response)});
    return client_.judge(text);
  }

 private:
  RemoteJudgeClient client_;
};

}  // namespace sectow
