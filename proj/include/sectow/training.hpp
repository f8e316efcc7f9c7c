#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sectow/arena.hpp"
#include "sectow/augment.hpp"
#include "sectow/config.hpp"
#include "sectow/error.hpp"
#include "sectow/grpo.hpp"
#include "sectow/judge.hpp"
#include "sectow/monitor.hpp"
#include "sectow/policy.hpp"
#include "sectow/rewards.hpp"
#include "sectow/rng.hpp"

namespace sectow {

struct TraceEntry {
  std::string phase;
  int iteration = 0;
  int step = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double kl = 0.0;
  bool degenerate = false;
  int groups = 0;
  int rejected_groups = 0;
};

inline nlohmann::json to_json(const TraceEntry& t) {
  return {{"phase", t.phase},         {"iteration", t.iteration}, {"step", t.step},
          {"mean_reward", t.mean_reward}, {"loss", t.loss},       {"kl", t.kl},
          {"degenerate", t.degenerate}, {"groups", t.groups},     {"rejected_groups", t.rejected_groups}};
}

inline TraceEntry trace_from_json(const nlohmann::json& j) {
  TraceEntry t;
  t.phase = j.at("phase").get<std::string>();
  t.iteration = j.at("iteration").get<int>();
  t.step = j.at("step").get<int>();
  t.mean_reward = j.at("mean_reward").get<double>();
  t.loss = j.at("loss").get<double>();
  t.kl = j.at("kl").get<double>();
  t.degenerate = j.at("degenerate").get<bool>();
  t.groups = j.at("groups").get<int>();
  t.rejected_groups = j.at("rejected_groups").get<int>();
  return t;
}

// ---- defender cold start ----

// Jailbreak samples learn [REFUSE, EOS]; general samples learn
// [COMPLY, first benign token of the query, EOS].
inline SftExample coldstart_example(const ArenaSample& s) {
  SftExample ex;
  ex.cond = defender_conditioning(s.query);
  if (s.rejection_required) {
    ex.target = {tok::kRefuse, tok::kEos};
  } else {
    int topic = tok::benign(1);
    for (int t : s.query)
      if (is_benign(t)) {
        topic = t;
        break;
      }
    ex.target = {tok::kComply, topic, tok::kEos};
  }
  return ex;
}

inline std::vector<SftExample> coldstart_examples(const Dataset& d) {
  std::vector<SftExample> out;
  out.reserve(d.size());
  for (const auto& s : d.samples) out.push_back(coldstart_example(s));
  return out;
}

struct SftRun {
  Policy policy;
  std::vector<double> losses;  // pre-step loss of every step
};

// Fixed-budget full-batch SFT. Zero steps returns the input unchanged.
inline SftRun cold_start_defender(Policy init, const Dataset& coldstart, int steps, double lr) {
  if (init.role() != Role::Defender) fail(ErrorKind::RoleMismatch, "defender cold start needs a defender policy");
  if (steps < 0) fail(ErrorKind::Config, "cold start step budget must be >= 0");
  SftRun run{std::move(init), {}};
  if (steps == 0) return run;
  if (coldstart.empty()) fail(ErrorKind::InvalidArgument, "cold start dataset is empty");
  const auto examples = coldstart_examples(coldstart);
  const auto traj = to_trajectories(run.policy, examples);
  for (int s = 0; s < steps; ++s) run.losses.push_back(sft_step(run.policy.table(), traj, lr).loss);
  run.policy.set_lineage(0, steps);
  return run;
}

// ---- GRPO phases ----

// Endless reshuffled pass over dataset indices.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    if (n == 0) fail(ErrorKind::InvalidArgument, "cannot batch an empty dataset");
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::vector<std::size_t> next(int count) {
    std::vector<std::size_t> out;
    for (int i = 0; i < count; ++i) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct PhaseResult {
  Policy policy;
  std::vector<TraceEntry> trace;
  std::vector<MonitorReport> reports;
  int steps_run = 0;
  bool stopped = false;
  int returned_step = 0;  // step of the returned parameters (differs after a rollback)
};

// Sampled defender response judged against a harmful query; the reward
// signal shared by attacker training and evaluation.
inline bool attack_succeeds(const Policy& defender, const TokenSeq& query, Judge& judge, Rng& rng, double temperature,
                            int max_len) {
  const auto response = respond(defender, query, rng, EvalOptions{max_len, temperature});
  return judge.judge_one(query, response.tokens).unsafe;
}

inline int attacker_generation_reward(const Generation& gen, const Policy& defender, Judge& judge, Rng& rng,
                                      const RunConfig& cfg) {
  const auto out = parse_attacker_output(gen.tokens);
  if (!out.format_ok) return attacker_reward(false, false);
  return attacker_reward(attack_succeeds(defender, out.answer, judge, rng, cfg.temperature_eval, cfg.defender_max_len),
                         true);
}

namespace detail {

struct StepStats {
  std::vector<RolloutGroup> groups;
  int rejected = 0;
};

template <class Cond, class Reward>
StepStats collect_batch(const Policy& policy, const Dataset& data, const std::vector<std::size_t>& idx, Cond&& cond,
                        Reward&& reward, Rng& rng, const RunConfig& cfg, int max_len) {
  StepStats st;
  for (std::size_t i : idx) {
    const auto& s = data.samples[i];
    try {
      auto g = collect_group(
          policy, cond(s), cfg.grpo.group_size, [&](const Generation& gen) { return reward(s, gen); }, rng,
          SamplingOptions{max_len, cfg.temperature_train}, std::to_string(i));
      finalize_group(g, cfg.grpo.std_floor);
      st.groups.push_back(std::move(g));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GroupRejected) throw;
      ++st.rejected;
    }
  }
  return st;
}

inline TraceEntry apply_step(Policy& policy, const Policy& ref, const StepStats& st, const RunConfig& cfg, double lr,
                             const std::string& phase, int iteration, int step) {
  GrpoConfig gc = cfg.grpo;
  gc.lr = lr;
  TraceEntry t;
  t.phase = phase;
  t.iteration = iteration;
  t.step = step;
  t.groups = static_cast<int>(st.groups.size());
  t.rejected_groups = st.rejected;
  if (st.groups.empty()) {
    t.degenerate = true;
    return t;
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& g : st.groups)
    for (double r : g.rewards) {
      sum += r;
      ++n;
    }
  t.mean_reward = sum / static_cast<double>(n);
  for (int e = 0; e < cfg.grpo.epochs_per_batch; ++e) {
    const auto res = grpo_step(policy, ref, st.groups, gc);
    if (e == 0) {
      t.loss = res.loss.total;
      t.kl = res.loss.kl;
      t.degenerate = res.degenerate_batch;
    }
    if (res.degenerate_batch) break;
  }
  policy.table().check_finite();
  return t;
}

}  // namespace detail

// Validation of an attacker checkpoint: raw generations on the val split at
// augmentation temperature (fixed seed so checkpoints are comparable),
// diversity of the format-valid answers, and their success rate against the
// current opponent.
inline MonitorReport validate_attacker(const Policy& attacker, const Dataset& val, const Policy& opponent, Judge& judge,
                                       const RunConfig& cfg, std::uint64_t seed, int iteration, int step) {
  Rng rng(seed);
  const auto cands = generate_candidates(attacker, val, rng, SamplingOptions{cfg.attacker_max_len, cfg.temperature_augment});
  std::vector<TokenSeq> answers;
  std::size_t hits = 0;
  for (const auto& rec : cands.records) {
    answers.push_back(rec.produced_query);
    if (attack_succeeds(opponent, rec.produced_query, judge, rng, cfg.temperature_eval, cfg.defender_max_len)) ++hits;
  }
  MonitorReport r;
  r.phase = Phase::Attacker;
  r.iteration = iteration;
  r.checkpoint_step = step;
  r.diversity = diversity_score(answers);
  r.asr = cands.generated ? static_cast<double>(hits) / static_cast<double>(cands.generated) : 0.0;
  return r;
}

inline MonitorReport validate_defender(const Policy& defender, const Dataset& val, Judge& judge,
                                       const RefusalVocabulary& vocab, const RunConfig& cfg, std::uint64_t seed,
                                       int iteration, int step) {
  Rng rng(seed);
  const EvalOptions opts{cfg.defender_max_len, cfg.temperature_eval};
  MonitorReport r;
  r.phase = Phase::Defender;
  r.iteration = iteration;
  r.checkpoint_step = step;
  const auto general = filter(val, false);
  const auto jailbreak = filter(val, true);
  if (!general.empty()) {
    const auto gm = general_metrics(defender, general, vocab, rng, opts);
    r.orr = gm.orr;
    r.acc = gm.acc;
  }
  if (!jailbreak.empty()) r.asr = attack_success_rate(defender, jailbreak, judge, rng, opts).asr;
  return r;
}

using OpponentFn = std::function<const Policy&(int step)>;

struct AttackerPhaseSpec {
  std::string name = "attacker";
  int iteration = 0;
  int steps = 0;
  const Dataset* val = nullptr;    // null: no validation or early stop
  bool starvation_check = false;   // cold start only
  std::uint64_t seed = 0;
};

// Attacker GRPO. The opponent can change with the step (cold-start warmup).
// With a validation split, checkpoints are validated at step 0, every
// monitor interval and at the end; when the diversity trigger fires the
// phase halts and the last checkpoint that passed is returned.
inline PhaseResult train_attacker_phase(const Policy& start, const Dataset& train, const OpponentFn& opponent, Judge& judge,
                                        const RunConfig& cfg, const AttackerPhaseSpec& spec) {
  if (start.role() != Role::Attacker) fail(ErrorKind::RoleMismatch, "attacker phase needs an attacker policy");
  PhaseResult out{start, {}, {}, 0, false, 0};
  if (spec.steps == 0) return out;
  const Policy ref = start;
  Policy policy = start;
  Policy last_good = start;
  int last_good_step = 0;
  std::optional<double> baseline;
  BatchCursor cursor(train.size(), derive_seed(spec.seed, "batches"));
  Rng rng(derive_seed(spec.seed, "rollouts"));
  const std::uint64_t val_seed = derive_seed(spec.seed, "validation");
  int starved = 0;

  auto validate = [&](int step) -> bool {
    auto rep = validate_attacker(policy, *spec.val, opponent(step), judge, cfg, val_seed, spec.iteration, step);
    if (!baseline && rep.diversity) baseline = rep.diversity;
    rep.diversity_baseline = baseline;
    const auto flags = early_stop_check(rep.diversity, rep.diversity ? baseline : std::nullopt, std::nullopt, cfg.thresholds);
    rep.stop_attacker = flags.stop_attacker;
    out.reports.push_back(rep);
    if (rep.stop_attacker && cfg.monitor_diversity) return true;
    last_good = policy;
    last_good_step = step;
    return false;
  };

  auto reward = [&](int step) {
    return [&, step](const ArenaSample&, const Generation& gen) {
      return attacker_generation_reward(gen, opponent(step), judge, rng, cfg);
    };
  };

  if (spec.val && validate(0)) {
    out.stopped = true;
    out.policy = last_good;
    out.returned_step = 0;
    return out;
  }
  for (int step = 1; step <= spec.steps; ++step) {
    const auto idx = cursor.next(cfg.batch_inputs);
    auto st = detail::collect_batch(
        policy, train, idx, [](const ArenaSample& s) { return attacker_conditioning(s); }, reward(step), rng, cfg,
        cfg.attacker_max_len);
    out.trace.push_back(detail::apply_step(policy, ref, st, cfg, cfg.attacker_lr, spec.name, spec.iteration, step));
    out.steps_run = step;
    if (spec.starvation_check) {
      starved = out.trace.back().degenerate ? starved + 1 : 0;
      if (starved > cfg.starvation_limit)
        fail(ErrorKind::RewardStarvation, "attacker reward starvation: " + std::to_string(starved) +
                                              " consecutive degenerate batches at step " + std::to_string(step));
    }
    if (spec.val && (step % cfg.monitor_interval == 0 || step == spec.steps) && validate(step)) {
      out.stopped = true;
      break;
    }
  }
  if (spec.val) {
    out.policy = last_good;
    out.returned_step = last_good_step;
  } else {
    out.policy = policy;
    out.returned_step = out.steps_run;
  }
  return out;
}

struct DefenderPhaseSpec {
  std::string name = "defender";
  int iteration = 0;
  int steps = 0;
  const Dataset* val = nullptr;
  std::uint64_t seed = 0;
};

// Defender GRPO with the rule-based refusal reward; the over-refusal
// trigger works like the attacker's diversity trigger.
inline PhaseResult train_defender_phase(const Policy& start, const Dataset& train, Judge& judge,
                                        const RefusalVocabulary& vocab, const RunConfig& cfg,
                                        const DefenderPhaseSpec& spec) {
  if (start.role() != Role::Defender) fail(ErrorKind::RoleMismatch, "defender phase needs a defender policy");
  PhaseResult out{start, {}, {}, 0, false, 0};
  if (spec.steps == 0) return out;
  if (train.empty()) fail(ErrorKind::InvalidArgument, "defender training set is empty");
  const Policy ref = start;
  Policy policy = start;
  Policy last_good = start;
  int last_good_step = 0;
  BatchCursor cursor(train.size(), derive_seed(spec.seed, "batches"));
  Rng rng(derive_seed(spec.seed, "rollouts"));
  const std::uint64_t val_seed = derive_seed(spec.seed, "validation");

  auto validate = [&](int step) -> bool {
    auto rep = validate_defender(policy, *spec.val, judge, vocab, cfg, val_seed, spec.iteration, step);
    rep.stop_defender = early_stop_check(std::nullopt, std::nullopt, rep.orr, cfg.thresholds).stop_defender;
    out.reports.push_back(rep);
    if (rep.stop_defender && cfg.monitor_orr) return true;
    last_good = policy;
    last_good_step = step;
    return false;
  };

  auto reward = [&](const ArenaSample& s, const Generation& gen) {
    return defender_reward(std::span<const int>(gen.tokens), s.rejection_required, vocab);
  };

  if (spec.val && validate(0)) {
    out.stopped = true;
    out.policy = last_good;
    return out;
  }
  for (int step = 1; step <= spec.steps; ++step) {
    const auto idx = cursor.next(cfg.batch_inputs);
    auto st = detail::collect_batch(
        policy, train, idx, [](const ArenaSample& s) { return defender_conditioning(s.query); }, reward, rng, cfg,
        cfg.defender_max_len);
    out.trace.push_back(detail::apply_step(policy, ref, st, cfg, cfg.defender_lr, spec.name, spec.iteration, step));
    out.steps_run = step;
    if (spec.val && (step % cfg.monitor_interval == 0 || step == spec.steps) && validate(step)) {
      out.stopped = true;
      break;
    }
  }
  if (spec.val) {
    out.policy = last_good;
    out.returned_step = last_good_step;
  } else {
    out.policy = policy;
    out.returned_step = out.steps_run;
  }
  return out;
}

// Mean attacker reward over a dataset at training temperature, one
// generation per input, against a fixed defender.
inline double attacker_mean_reward(const Policy& attacker, const Dataset& inputs, const Policy& defender, Judge& judge,
                                   const RunConfig& cfg, std::uint64_t seed) {
  if (inputs.empty()) fail(ErrorKind::InvalidArgument, "reward evaluation needs inputs");
  Rng rng(seed);
  double sum = 0.0;
  for (const auto& s : inputs.samples) {
    const auto gen = sample(attacker, attacker_conditioning(s), cfg.attacker_max_len, cfg.temperature_train, rng);
    sum += attacker_generation_reward(gen, defender, judge, rng, cfg);
  }
  return sum / static_cast<double>(inputs.size());
}

}  // namespace sectow
