#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "sectow/error.hpp"
#include "sectow/grpo.hpp"
#include "sectow/monitor.hpp"

namespace sectow {

struct RunConfig {
  std::uint64_t seed = 1;
  int K = 3;

  int n_jailbreak = 300;
  int n_general = 600;
  double seed_wrapped_fraction = 0.05;
  int probe_jailbreak = 400;
  int probe_general = 400;
  double probe_wrapped_fraction = 0.5;

  GrpoConfig grpo{8, 0.2, 0.04, 2.0, 1, 1e-8};
  int batch_inputs = 16;
  int step_cap = 500;

  double sft_lr = 0.5;
  double defender_lr = 10.0;  // GRPO step sizes per role
  double attacker_lr = 20.0;

  int coldstart_defender_steps = 300;
  int coldstart_attacker_warmup_steps = 100;
  int coldstart_attacker_steps = 200;
  double attacker_coldstart_fraction = 0.30;
  int starvation_limit = 50;

  int attacker_steps = 150;
  int defender_steps = 150;
  double train_val_split = 0.80;

  int filter_n = 6;
  int augment_samples_per_source = 2;

  StopThresholds thresholds{};
  int monitor_interval = 25;
  bool monitor_diversity = true;
  bool monitor_orr = true;

  double temperature_train = 1.0;
  double temperature_eval = 0.7;
  double temperature_augment = 1.0;
  double temperature_filter = 1.0;

  int defender_max_len = 4;
  int attacker_max_len = 24;

  std::string run_dir = "runs/default";
  std::string data_dir = "data";
  std::string refusal_vocab_file;  // empty: token mode

  std::string judge_kind = "rule";  // rule | remote
  std::string judge_endpoint_url;
  int judge_timeout_ms = 5000;
  int judge_max_retries = 3;

  void validate() const;
};

namespace detail {

using Field = std::variant<int*, std::uint64_t*, double*, bool*, std::string*>;

inline std::vector<std::pair<std::string, Field>> fields(RunConfig& c) {
  return {
      {"seed", &c.seed},
      {"K", &c.K},
      {"data.n_jailbreak", &c.n_jailbreak},
      {"data.n_general", &c.n_general},
      {"data.seed_wrapped_fraction", &c.seed_wrapped_fraction},
      {"data.probe_jailbreak", &c.probe_jailbreak},
      {"data.probe_general", &c.probe_general},
      {"data.probe_wrapped_fraction", &c.probe_wrapped_fraction},
      {"grpo.group_size", &c.grpo.group_size},
      {"grpo.clip_eps", &c.grpo.clip_eps},
      {"grpo.kl_beta", &c.grpo.kl_beta},
      {"grpo.epochs_per_batch", &c.grpo.epochs_per_batch},
      {"grpo.std_floor", &c.grpo.std_floor},
      {"grpo.batch_inputs", &c.batch_inputs},
      {"grpo.step_cap", &c.step_cap},
      {"sft.lr", &c.sft_lr},
      {"coldstart.defender_steps", &c.coldstart_defender_steps},
      {"coldstart.attacker_warmup_steps", &c.coldstart_attacker_warmup_steps},
      {"coldstart.attacker_steps", &c.coldstart_attacker_steps},
      {"coldstart.attacker_fraction", &c.attacker_coldstart_fraction},
      {"coldstart.starvation_limit", &c.starvation_limit},
      {"iteration.attacker_steps", &c.attacker_steps},
      {"iteration.defender_steps", &c.defender_steps},
      {"iteration.train_val_split", &c.train_val_split},
      {"filter_n", &c.filter_n},
      {"augment.samples_per_source", &c.augment_samples_per_source},
      {"monitor.diversity_drop", &c.thresholds.diversity_drop},
      {"monitor.orr_max", &c.thresholds.orr_max},
      {"monitor.interval", &c.monitor_interval},
      {"monitor.diversity", &c.monitor_diversity},
      {"monitor.orr", &c.monitor_orr},
      {"temperature.train", &c.temperature_train},
      {"temperature.eval", &c.temperature_eval},
      {"temperature.augment", &c.temperature_augment},
      {"temperature.filter", &c.temperature_filter},
      {"defender.max_len", &c.defender_max_len},
      {"attacker.max_len", &c.attacker_max_len},
      {"defender.lr", &c.defender_lr},
      {"attacker.lr", &c.attacker_lr},
      {"paths.run_dir", &c.run_dir},
      {"paths.data_dir", &c.data_dir},
      {"refusal.vocab_file", &c.refusal_vocab_file},
      {"judge.kind", &c.judge_kind},
      {"judge.endpoint_url", &c.judge_endpoint_url},
      {"judge.timeout_ms", &c.judge_timeout_ms},
      {"judge.max_retries", &c.judge_max_retries},
  };
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* b = value.data();
  const char* e = b + value.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) fail(ErrorKind::Config, "bad value for " + key + ": '" + value + "'");
  return out;
}

inline void assign(const std::string& key, const Field& field, const std::string& value) {
  std::visit(
      [&](auto* ptr) {
        using T = std::remove_pointer_t<decltype(ptr)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (value == "true")
            *ptr = true;
          else if (value == "false")
            *ptr = false;
          else
            fail(ErrorKind::Config, "bad boolean for " + key + ": '" + value + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *ptr = value;
        } else {
          *ptr = parse_number<T>(key, value);
        }
      },
      field);
}

inline std::string format(const Field& field) {
  return std::visit(
      [](auto* ptr) -> std::string {
        using T = std::remove_pointer_t<decltype(ptr)>;
        if constexpr (std::is_same_v<T, bool>) {
          return *ptr ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *ptr;
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.17g", *ptr);
          return buf;
        } else {
          return std::to_string(*ptr);
        }
      },
      field);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

inline void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Config, what);
  };
  grpo.validate();
  check(K >= 1, "K must be >= 1");
  check(n_jailbreak >= K && n_general >= K,
        "dataset sizes must be >= K");
  check(seed_wrapped_fraction >= 0.0 && seed_wrapped_fraction <= 0.2, "data.seed_wrapped_fraction must be in [0, 0.2]");
  check(probe_jailbreak > 0 && probe_general > 0, "probe sizes must be positive");
  check(probe_wrapped_fraction >= 0.0 && probe_wrapped_fraction <= 1.0, "data.probe_wrapped_fraction must be in [0, 1]");
  check(batch_inputs >= 1, "grpo.batch_inputs must be >= 1");
  check(step_cap >= 1, "grpo.step_cap must be >= 1");
  check(sft_lr > 0.0, "sft.lr must be positive");
  check(defender_lr > 0.0 && attacker_lr > 0.0, "GRPO learning rates must be positive");
  check(coldstart_defender_steps >= 0, "coldstart.defender_steps must be >= 0");
  check(coldstart_attacker_warmup_steps >= 0, "coldstart.attacker_warmup_steps must be >= 0");
  check(coldstart_attacker_steps >= 0 && coldstart_attacker_steps <= step_cap, "coldstart.attacker_steps must be in [0, step_cap]");
  check(attacker_coldstart_fraction > 0.0 && attacker_coldstart_fraction < 1.0, "coldstart.attacker_fraction must be in (0, 1)");
  check(starvation_limit >= 1, "coldstart.starvation_limit must be >= 1");
  check(attacker_steps >= 0 && attacker_steps <= step_cap, "iteration.attacker_steps must be in [0, step_cap]");
  check(defender_steps >= 0 && defender_steps <= step_cap, "iteration.defender_steps must be in [0, step_cap]");
  check(train_val_split > 0.0 && train_val_split < 1.0, "iteration.train_val_split must be in (0, 1)");
  check(filter_n >= 2 && filter_n % 2 == 0, "filter_n must be even and >= 2");
  check(augment_samples_per_source >= 1, "augment.samples_per_source must be >= 1");
  check(thresholds.diversity_drop > 0.0 && thresholds.diversity_drop < 1.0, "monitor.diversity_drop must be in (0, 1)");
  check(thresholds.orr_max > 0.0 && thresholds.orr_max <= 1.0, "monitor.orr_max must be in (0, 1]");
  check(monitor_interval >= 1, "monitor.interval must be >= 1");
  for (double t : {temperature_train, temperature_eval, temperature_augment, temperature_filter})
    check(t > 0.0, "temperatures must be positive");
  check(defender_max_len >= 2, "defender.max_len must be >= 2");
  check(attacker_max_len >= 6, "attacker.max_len must be >= 6");
  check(judge_kind == "rule" || judge_kind == "remote", "judge.kind must be 'rule' or 'remote'");
  check(judge_kind != "remote" || !judge_endpoint_url.empty() || std::getenv("SECTOW_JUDGE_URL"),
        "judge.kind = remote needs judge.endpoint_url or SECTOW_JUDGE_URL");
}

// Flat "dotted.key = value" lines; '#' comments; unknown keys are errors.
inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  auto table = detail::fields(cfg);
  std::map<std::string, detail::Field> by_key(table.begin(), table.end());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    detail::assign(key, it->second, value);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  return parse_config(in);
}

// Every key, fixed order, round-trip exact.
inline std::string config_snapshot(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (const auto& [key, field] : detail::fields(copy)) out += key + " = " + detail::format(field) + "\n";
  return out;
}

}  // namespace sectow
