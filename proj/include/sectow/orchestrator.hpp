#pragma once

#include <algorithm>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sectow/arena.hpp"
#include "sectow/augment.hpp"
#include "sectow/checkpoint.hpp"
#include "sectow/config.hpp"
#include "sectow/dataset_io.hpp"
#include "sectow/error.hpp"
#include "sectow/fsutil.hpp"
#include "sectow/judge.hpp"
#include "sectow/monitor.hpp"
#include "sectow/priors.hpp"
#include "sectow/remote_judge.hpp"
#include "sectow/training.hpp"

namespace sectow {

namespace fs = std::filesystem;

inline std::unique_ptr<Judge> make_judge(const RunConfig& cfg) {
  if (cfg.judge_kind == "rule") return std::make_unique<RuleJudge>();
  RemoteJudgeConfig rc;
  rc.endpoint_url = cfg.judge_endpoint_url;
  rc.timeout_ms = cfg.judge_timeout_ms;
  rc.max_retries = cfg.judge_max_retries;
  rc.apply_env();
  return std::make_unique<RemoteJudge>(rc);
}

inline RefusalVocabulary make_vocabulary(const RunConfig& cfg) {
  if (cfg.refusal_vocab_file.empty()) return RefusalVocabulary::token_mode();
  return load_refusal_vocabulary(cfg.refusal_vocab_file);
}

// ---- JSONL helpers ----

template <class T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const auto& it : items) out += to_json(it).dump() + "\n";
  return out;
}

inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(read_file(path)); }

inline nlohmann::json candidate_to_json(const AugmentRecord& r) {
  return {{"source", to_json(r.source)},
          {"mode", std::string(to_string(r.mode))},
          {"produced_query", r.produced_query},
          {"image_digest", r.image_digest}};
}

inline AugmentRecord candidate_from_json(const nlohmann::json& j) {
  AugmentRecord r;
  r.source = sample_from_json(j.at("source"));
  r.mode = j.at("mode").get<std::string>() == "REFINE_OLD" ? AugmentMode::RefineOld : AugmentMode::GenerateNew;
  r.produced_query = j.at("produced_query").get<TokenSeq>();
  r.image_digest = j.at("image_digest").get<int>();
  return r;
}

// ---- evaluation ----

struct DefenderEval {
  double asr = 0.0;
  double asr_wrapped = 0.0;  // fully wrapped part of the probe
  double asr_bare = 0.0;
  double orr = 0.0;
  double acc = 0.0;
};

inline nlohmann::json to_json(const DefenderEval& e) {
  return {{"asr", e.asr}, {"asr_wrapped", e.asr_wrapped}, {"asr_bare", e.asr_bare}, {"orr", e.orr}, {"acc", e.acc}};
}

// Common random numbers: the same seeds for every checkpoint compared.
inline DefenderEval evaluate_defender(const Policy& defender, const Dataset& probe_jailbreak, const Dataset& probe_general,
                                      Judge& judge, const RefusalVocabulary& vocab, const RunConfig& cfg) {
  const EvalOptions opts{cfg.defender_max_len, cfg.temperature_eval};
  DefenderEval e;
  Dataset wrapped, bare;
  wrapped.kind = bare.kind = DatasetKind::Jailbreak;
  for (const auto& s : probe_jailbreak.samples) (fully_wrapped(s.query) ? wrapped : bare).samples.push_back(s);
  {
    Rng rng(derive_seed(cfg.seed, "eval-asr"));
    e.asr = attack_success_rate(defender, probe_jailbreak, judge, rng, opts).asr;
  }
  if (!wrapped.empty()) {
    Rng rng(derive_seed(cfg.seed, "eval-asr-wrapped"));
    e.asr_wrapped = attack_success_rate(defender, wrapped, judge, rng, opts).asr;
  }
  if (!bare.empty()) {
    Rng rng(derive_seed(cfg.seed, "eval-asr-bare"));
    e.asr_bare = attack_success_rate(defender, bare, judge, rng, opts).asr;
  }
  Rng rng(derive_seed(cfg.seed, "eval-general"));
  const auto gm = general_metrics(defender, probe_general, vocab, rng, opts);
  e.orr = gm.orr;
  e.acc = gm.acc;
  return e;
}

// Attack success of an attacker against a fixed defender: one generation
// per probe input (refinement for jailbreak inputs, new generation for
// general ones); format failures count as unsuccessful.
inline double evaluate_attacker(const Policy& attacker, const Policy& defender, const Dataset& probe_jailbreak,
                                const Dataset& probe_general, Judge& judge, const RunConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "eval-attacker"));
  std::size_t hits = 0, total = 0;
  for (const Dataset* d : {&probe_jailbreak, &probe_general}) {
    for (const auto& s : d->samples) {
      ++total;
      const auto gen = sample(attacker, attacker_conditioning(s), cfg.attacker_max_len, cfg.temperature_augment, rng);
      const auto out = parse_attacker_output(gen.tokens);
      if (out.format_ok &&
          attack_succeeds(defender, out.answer, judge, rng, cfg.temperature_eval, cfg.defender_max_len))
        ++hits;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

// ---- run directory ----

struct RunLayout {
  fs::path root;
  const RunConfig* cfg = nullptr;

  fs::path data() const { return root / cfg->data_dir; }
  fs::path d_j() const { return data() / "d_j.jsonl"; }
  fs::path d_g() const { return data() / "d_g.jsonl"; }
  fs::path probe_jailbreak() const { return data() / "probe_jailbreak.jsonl"; }
  fs::path probe_general() const { return data() / "probe_general.jsonl"; }
  fs::path coldstart() const { return root / "coldstart"; }
  fs::path iter(int k) const { return root / ("iter_" + std::to_string(k)); }
  fs::path progress() const { return root / "progress"; }
  fs::path marker(const std::string& substep) const { return progress() / (substep + ".done"); }
  fs::path defender_ckpt(int k) const { return (k == 0 ? coldstart() : iter(k)) / "defender.ckpt"; }
  fs::path attacker_ckpt(int k) const { return (k == 0 ? coldstart() : iter(k)) / "attacker.ckpt"; }
};

// Sub-steps in execution order.
inline std::vector<std::string> run_substeps(int K) {
  std::vector<std::string> out = {"data", "coldstart_defender", "coldstart_attacker"};
  for (int k = 1; k <= K; ++k)
    for (const char* s : {"attacker", "candidates", "filter", "assemble", "defender"})
      out.push_back("iter" + std::to_string(k) + "." + s);
  out.push_back("final");
  return out;
}

// Files every finished iteration directory must hold.
inline const std::vector<std::string>& iteration_files() {
  static const std::vector<std::string> files = {"attacker.ckpt", "defender.ckpt", "d_j_raw_stats.json",
                                                 "d_j_new.jsonl", "d_new.jsonl",   "augment_report.jsonl",
                                                 "monitor.jsonl"};
  return files;
}

enum class RunStatus { Completed, Stopped };

// The alternating schedule. Every sub-step reads its inputs from the run
// directory and writes its outputs (marker last) before the next starts, so
// a resumed run replays exactly what an uninterrupted one would have done.
class TugOfWar {
 public:
  TugOfWar(RunConfig cfg, fs::path root, Judge& judge)
      : cfg_(std::move(cfg)), layout_{std::move(root), &cfg_}, judge_(judge), vocab_(make_vocabulary(cfg_)) {
    cfg_.validate();
  }

  const RunLayout& layout() const { return layout_; }
  const RunConfig& config() const { return cfg_; }

  // Runs the sub-steps that are not yet done. Stops after `stop_after` when
  // given (used to simulate a crash).
  RunStatus run(const std::optional<std::string>& stop_after = std::nullopt) {
    const auto steps = run_substeps(cfg_.K);
    if (stop_after && std::find(steps.begin(), steps.end(), *stop_after) == steps.end())
      fail(ErrorKind::Config, "unknown sub-step '" + *stop_after + "'");
    init_dir();
    for (const auto& name : steps) {
      if (fs::exists(layout_.marker(name))) {
        verify_done(name);
      } else {
        try {
          execute(name);
        } catch (const Error& e) {
          fail(e.kind(), "[" + name + "] " + e.what());
        }
        write_file_atomic(layout_.marker(name), name + "\n");
      }
      if (stop_after && name == *stop_after) return RunStatus::Stopped;
    }
    return RunStatus::Completed;
  }

  // A finished iteration must still hold all of its files when resumed.
  void verify_done(const std::string& name) const {
    const auto dot = name.find('.');
    if (dot == std::string::npos || name.substr(dot + 1) != "defender") return;
    const auto dir = layout_.iter(std::stoi(name.substr(4, dot - 4)));
    for (const auto& f : iteration_files())
      if (!fs::exists(dir / f)) fail(ErrorKind::Io, "[" + name + "] marked done but " + (dir / f).string() + " is missing");
  }

  void execute(const std::string& name) {
    if (name == "data") return step_data();
    if (name == "coldstart_defender") return step_coldstart_defender();
    if (name == "coldstart_attacker") return step_coldstart_attacker();
    if (name == "final") return step_final();
    const auto dot = name.find('.');
    const int k = std::stoi(name.substr(4, dot - 4));
    const auto what = name.substr(dot + 1);
    if (what == "attacker") return step_attacker(k);
    if (what == "candidates") return step_candidates(k);
    if (what == "filter") return step_filter(k);
    if (what == "assemble") return step_assemble(k);
    if (what == "defender") return step_defender(k);
    fail(ErrorKind::InvalidArgument, "unknown sub-step " + name);
  }

  // ---- datasets ----

  Dataset d_j() const { return load_dataset(layout_.d_j(), DatasetKind::Jailbreak); }
  Dataset d_g() const { return load_dataset(layout_.d_g(), DatasetKind::General); }

  // D^(k): the k-th jailbreak and general partitions, shuffled together.
  Dataset iteration_data(int k) const {
    const auto pj = partition(d_j(), cfg_.K, derive_seed(cfg_.seed, "partition-jailbreak"));
    const auto pg = partition(d_g(), cfg_.K, derive_seed(cfg_.seed, "partition-general"));
    auto d = concat(pj.at(static_cast<std::size_t>(k - 1)), pg.at(static_cast<std::size_t>(k - 1)));
    d.split_id = k;
    Rng rng(derive_seed(cfg_.seed, "mix", static_cast<std::uint64_t>(k)));
    rng.shuffle(d.samples);
    return d;
  }

  Dataset coldstart_defender_data() const {
    const auto j = d_j();
    auto g = d_g();
    Rng rng(derive_seed(cfg_.seed, "coldstart-general"));
    rng.shuffle(g.samples);
    return concat(j, head(g, j.size()));
  }

  Dataset coldstart_attacker_data() const {
    const auto d = iteration_data(1);
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg_.attacker_coldstart_fraction * static_cast<double>(d.size())));
    return head(d, n);
  }

  Policy load_defender(int k) const { return load_lineage(layout_.defender_ckpt(k), Role::Defender, k); }
  Policy load_attacker(int k) const { return load_lineage(layout_.attacker_ckpt(k), Role::Attacker, k); }

 private:
  static Policy load_lineage(const fs::path& path, Role role, int k) {
    auto p = load_checkpoint(path, role);
    if (p.iteration() != k)
      fail(ErrorKind::Lineage, path.string() + " holds " + p.version() + ", expected iteration " + std::to_string(k));
    return p;
  }

  void init_dir() {
    fs::create_directories(layout_.progress());
    const auto snap_path = layout_.root / "config.snapshot";
    RunConfig mine = cfg_;
    mine.run_dir = "";
    const auto snap = config_snapshot(mine);
    if (fs::exists(snap_path)) {
      auto stored = parse_config_string(read_file(snap_path));
      stored.run_dir = "";
      if (config_snapshot(stored) != snap)
        fail(ErrorKind::Config, "run directory " + layout_.root.string() + " was created with a different config");
    } else {
      write_file_atomic(snap_path, config_snapshot(cfg_));
    }
  }

  void step_data() {
    const auto seeds = gen_seed_datasets(cfg_.seed, static_cast<std::size_t>(cfg_.n_jailbreak),
                                         static_cast<std::size_t>(cfg_.n_general), cfg_.seed_wrapped_fraction);
    Rng pj(derive_seed(cfg_.seed, "probe-jailbreak"));
    Rng pg(derive_seed(cfg_.seed, "probe-general"));
    const auto probe_j =
        gen_jailbreak_set(pj, static_cast<std::size_t>(cfg_.probe_jailbreak), cfg_.probe_wrapped_fraction);
    const auto probe_g = gen_general_set(pg, static_cast<std::size_t>(cfg_.probe_general));
    save_dataset(seeds.jailbreak, layout_.d_j());
    save_dataset(seeds.general, layout_.d_g());
    save_dataset(probe_j, layout_.probe_jailbreak());
    save_dataset(probe_g, layout_.probe_general());
  }

  void step_coldstart_defender() {
    auto run = cold_start_defender(defender_base_prior(), coldstart_defender_data(), cfg_.coldstart_defender_steps,
                                   cfg_.sft_lr);
    run.policy.set_lineage(0, cfg_.coldstart_defender_steps);
    std::string trace;
    for (std::size_t i = 0; i < run.losses.size(); ++i)
      trace += nlohmann::json{{"phase", "coldstart_defender"}, {"step", i + 1}, {"loss", run.losses[i]}}.dump() + "\n";
    write_file_atomic(layout_.coldstart() / "trace_defender.jsonl", trace);
    save_checkpoint(run.policy, layout_.defender_ckpt(0));
  }

  void step_coldstart_attacker() {
    const Policy init_defender = defender_base_prior();
    const Policy trained_defender = load_defender(0);
    const int warmup = cfg_.coldstart_attacker_warmup_steps;
    OpponentFn opponent = [&](int step) -> const Policy& { return step <= warmup ? init_defender : trained_defender; };
    AttackerPhaseSpec spec;
    spec.name = "coldstart_attacker";
    spec.iteration = 0;
    spec.steps = cfg_.coldstart_attacker_steps;
    spec.starvation_check = true;
    spec.seed = derive_seed(cfg_.seed, "coldstart-attacker");
    auto res = train_attacker_phase(attacker_base_prior(), coldstart_attacker_data(), opponent, judge_, cfg_, spec);
    res.policy.set_lineage(0, res.returned_step);
    write_file_atomic(layout_.coldstart() / "trace_attacker.jsonl", to_jsonl(res.trace));
    save_checkpoint(res.policy, layout_.attacker_ckpt(0));
  }

  void step_attacker(int k) {
    const auto d = iteration_data(k);
    const auto [train, val] = train_val_split(d, cfg_.train_val_split);
    const Policy start = load_attacker(k - 1);
    const Policy opponent_policy = load_defender(k - 1);
    OpponentFn opponent = [&](int) -> const Policy& { return opponent_policy; };
    AttackerPhaseSpec spec;
    spec.name = "attacker";
    spec.iteration = k;
    spec.steps = cfg_.attacker_steps;
    spec.val = &val;
    spec.seed = derive_seed(cfg_.seed, "attacker", static_cast<std::uint64_t>(k));
    auto res = train_attacker_phase(start, train, opponent, judge_, cfg_, spec);
    res.policy.set_lineage(k, res.returned_step);
    const auto dir = layout_.iter(k);
    write_file_atomic(dir / "trace_attacker.jsonl", to_jsonl(res.trace));
    write_file_atomic(dir / "monitor_attacker.jsonl", to_jsonl(res.reports));
    write_json(dir / "attacker_phase.json", {{"steps_run", res.steps_run},
                                              {"stopped", res.stopped},
                                              {"returned_step", res.returned_step},
                                              {"parent", start.version()}});
    save_checkpoint(res.policy, layout_.attacker_ckpt(k));
  }

  void step_candidates(int k) {
    const Policy attacker = load_attacker(k);
    Rng rng(derive_seed(cfg_.seed, "candidates", static_cast<std::uint64_t>(k)));
    const auto set = generate_candidates(attacker, iteration_data(k), rng,
                                         SamplingOptions{cfg_.attacker_max_len, cfg_.temperature_augment},
                                         cfg_.augment_samples_per_source);
    std::string lines;
    std::vector<TokenSeq> answers;
    std::size_t harmful = 0;
    for (const auto& r : set.records) {
      lines += candidate_to_json(r).dump() + "\n";
      answers.push_back(r.produced_query);
      if (harm_oracle(r.produced_query)) ++harmful;
    }
    const auto div = diversity_score(answers);
    const auto dir = layout_.iter(k);
    write_file_atomic(dir / "d_j_raw.jsonl", lines);
    write_json(dir / "d_j_raw_stats.json", {{"generated", set.generated},
                                             {"format_dropped", set.format_dropped},
                                             {"candidates", set.records.size()},
                                             {"harmful", harmful},
                                             {"diversity", div ? nlohmann::json(*div) : nlohmann::json(nullptr)}});
  }

  void step_filter(int k) {
    const auto dir = layout_.iter(k);
    std::vector<AugmentRecord> cands;
    for (const auto& j : read_jsonl(dir / "d_j_raw.jsonl")) cands.push_back(candidate_from_json(j));
    const Policy defender = load_defender(k - 1);
    Rng rng(derive_seed(cfg_.seed, "filter", static_cast<std::uint64_t>(k)));
    auto res = filter_high_quality(defender, std::move(cands), cfg_.filter_n, judge_, rng,
                                   EvalOptions{cfg_.defender_max_len, cfg_.temperature_filter});
    res.kept.split_id = k;
    std::string report;
    for (const auto& r : res.records) {
      auto j = to_json(r);
      j["produced_query"] = r.produced_query;
      j["oracle_benign"] = r.oracle_benign;
      report += j.dump() + "\n";
    }
    write_file_atomic(dir / "augment_report.jsonl", report);
    write_json(dir / "filter_stats.json", {{"candidates", res.records.size()},
                                            {"kept", res.kept.size()},
                                            {"unresolved", res.unresolved},
                                            {"discarded_benign", res.discarded_benign}});
    save_dataset(res.kept, dir / "d_j_new.jsonl");
  }

  void step_assemble(int k) {
    const auto dir = layout_.iter(k);
    const auto jailbreak_new = load_dataset(dir / "d_j_new.jsonl", DatasetKind::Jailbreak);
    const auto [train, val] = train_val_split(iteration_data(k), cfg_.train_val_split);
    Rng rng(derive_seed(cfg_.seed, "assemble", static_cast<std::uint64_t>(k)));
    const auto res = assemble_iteration_dataset(jailbreak_new, filter(train, false), rng);
    write_json(dir / "assemble.json", {{"no_new_data", res.no_new_data},
                                        {"shortfall_warning", res.shortfall_warning},
                                        {"size", res.dataset.size()}});
    save_dataset(res.dataset, dir / "d_new.jsonl");
  }

  void step_defender(int k) {
    const auto dir = layout_.iter(k);
    const bool vacuous = read_json(dir / "assemble.json").at("no_new_data").get<bool>();
    const Policy start = load_defender(k - 1);
    std::vector<MonitorReport> reports;
    for (const auto& j : read_jsonl(dir / "monitor_attacker.jsonl")) reports.push_back(monitor_report_from_json(j));
    Policy result = start;
    nlohmann::json phase = {{"vacuous", vacuous}, {"parent", start.version()}};
    if (vacuous) {
      result.set_lineage(k, 0);
      write_file_atomic(dir / "trace_defender.jsonl", "");
      write_file_atomic(dir / "monitor_defender.jsonl", "");
      phase["steps_run"] = 0;
      phase["stopped"] = false;
      phase["returned_step"] = 0;
    } else {
      const auto d_new = load_dataset(dir / "d_new.jsonl");
      const auto [train, val] = train_val_split(iteration_data(k), cfg_.train_val_split);
      DefenderPhaseSpec spec;
      spec.name = "defender";
      spec.iteration = k;
      spec.steps = cfg_.defender_steps;
      spec.val = &val;
      spec.seed = derive_seed(cfg_.seed, "defender", static_cast<std::uint64_t>(k));
      auto res = train_defender_phase(start, d_new, judge_, vocab_, cfg_, spec);
      result = res.policy;
      result.set_lineage(k, res.returned_step);
      write_file_atomic(dir / "trace_defender.jsonl", to_jsonl(res.trace));
      write_file_atomic(dir / "monitor_defender.jsonl", to_jsonl(res.reports));
      reports.insert(reports.end(), res.reports.begin(), res.reports.end());
      phase["steps_run"] = res.steps_run;
      phase["stopped"] = res.stopped;
      phase["returned_step"] = res.returned_step;
    }
    write_json(dir / "defender_phase.json", phase);
    write_file_atomic(dir / "monitor.jsonl", to_jsonl(reports));
    save_checkpoint(result, layout_.defender_ckpt(k));
  }

  void check_chain() const {
    for (int k = 0; k <= cfg_.K; ++k) {
      load_defender(k);
      load_attacker(k);
      if (k == 0) continue;
      for (const char* f : {"attacker_phase.json", "defender_phase.json"}) {
        const auto parent = read_json(layout_.iter(k) / f).at("parent").get<std::string>();
        const std::string prefix = std::string(f[0] == 'a' ? "ATTACKER" : "DEFENDER") + ":" + std::to_string(k - 1) + ":";
        if (parent.rfind(prefix, 0) != 0)
          fail(ErrorKind::Lineage, "iteration " + std::to_string(k) + " parent " + parent + " is not from iteration " +
                                       std::to_string(k - 1));
      }
      for (const auto& f : iteration_files())
        if (!fs::exists(layout_.iter(k) / f)) fail(ErrorKind::Lineage, "missing " + (layout_.iter(k) / f).string());
    }
  }

  void step_final() {
    check_chain();
    const auto probe_j = load_dataset(layout_.probe_jailbreak(), DatasetKind::Jailbreak);
    const auto probe_g = load_dataset(layout_.probe_general(), DatasetKind::General);
    const Policy init_defender = defender_base_prior();

    nlohmann::json eval;
    eval["init_defender"] = to_json(evaluate_defender(init_defender, probe_j, probe_g, judge_, vocab_, cfg_));
    eval["iterations"] = nlohmann::json::array();
    for (int k = 0; k <= cfg_.K; ++k) {
      const auto defender = load_defender(k);
      const auto attacker = load_attacker(k);
      auto e = to_json(evaluate_defender(defender, probe_j, probe_g, judge_, vocab_, cfg_));
      e["k"] = k;
      e["attacker_asr_vs_init"] = evaluate_attacker(attacker, init_defender, probe_j, probe_g, judge_, cfg_);
      e["defender_version"] = defender.version();
      e["attacker_version"] = attacker.version();
      eval["iterations"].push_back(e);
    }
    write_json(layout_.root / "eval.json", eval);

    // metrics.jsonl: every trace, monitor report, iteration summary and
    // evaluation line of the run, in schedule order.
    std::string m;
    auto tagged = [&](const char* event, nlohmann::json j) {
      j["event"] = event;
      m += j.dump() + "\n";
    };
    for (const auto& j : read_jsonl(layout_.coldstart() / "trace_defender.jsonl")) tagged("trace", j);
    for (const auto& j : read_jsonl(layout_.coldstart() / "trace_attacker.jsonl")) tagged("trace", j);
    for (int k = 1; k <= cfg_.K; ++k) {
      const auto dir = layout_.iter(k);
      for (const auto& j : read_jsonl(dir / "trace_attacker.jsonl")) tagged("trace", j);
      for (const auto& j : read_jsonl(dir / "trace_defender.jsonl")) tagged("trace", j);
      for (const auto& j : read_jsonl(dir / "monitor.jsonl")) tagged("monitor", j);
      nlohmann::json it = {{"iteration", k},
                           {"attacker_phase", read_json(dir / "attacker_phase.json")},
                           {"candidates", read_json(dir / "d_j_raw_stats.json")},
                           {"filter", read_json(dir / "filter_stats.json")},
                           {"assemble", read_json(dir / "assemble.json")},
                           {"defender_phase", read_json(dir / "defender_phase.json")}};
      tagged("iteration", it);
    }
    tagged("eval_init", eval["init_defender"]);
    for (const auto& e : eval["iterations"]) tagged("eval", e);
    write_file_atomic(layout_.root / "metrics.jsonl", m);
  }

  RunConfig cfg_;
  RunLayout layout_;
  Judge& judge_;
  RefusalVocabulary vocab_;
};

// ---- reporting ----

struct EvalRow {
  int k = 0;
  double asr = 0.0, asr_wrapped = 0.0, asr_bare = 0.0, orr = 0.0, acc = 0.0, attacker_asr = 0.0;
};

inline std::vector<EvalRow> load_eval(const fs::path& run_dir) {
  const auto j = read_json(run_dir / "eval.json");
  std::vector<EvalRow> rows;
  for (const auto& e : j.at("iterations"))
    rows.push_back({e.at("k").get<int>(), e.at("asr").get<double>(), e.at("asr_wrapped").get<double>(),
                    e.at("asr_bare").get<double>(), e.at("orr").get<double>(), e.at("acc").get<double>(),
                    e.at("attacker_asr_vs_init").get<double>()});
  return rows;
}

inline std::string render_report(const fs::path& run_dir, bool csv) {
  const auto rows = load_eval(run_dir);
  std::string out;
  char buf[256];
  if (csv) {
    out = "k,asr,asr_wrapped,asr_bare,orr,acc,attacker_asr_vs_init\n";
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.k, r.asr, r.asr_wrapped, r.asr_bare, r.orr,
                    r.acc, r.attacker_asr);
      out += buf;
    }
    return out;
  }
  out = "   k      ASR  ASR(wrap)  ASR(bare)      ORR      ACC  atk-ASR(init)\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%4d %8.4f %10.4f %10.4f %8.4f %8.4f %14.4f\n", r.k, r.asr, r.asr_wrapped,
                  r.asr_bare, r.orr, r.acc, r.attacker_asr);
    out += buf;
  }
  // Monitor checkpoints per iteration.
  for (int k = 1;; ++k) {
    const auto path = run_dir / ("iter_" + std::to_string(k)) / "monitor.jsonl";
    if (!fs::exists(path)) break;
    out += "\niteration " + std::to_string(k) + " monitor\n";
    out += "  phase     step  diversity      ORR      ASR  stop\n";
    for (const auto& j : read_jsonl(path)) {
      const auto r = monitor_report_from_json(j);
      auto fmt = [](const std::optional<double>& v) {
        char b[32];
        if (!v) return std::string("        -");
        std::snprintf(b, sizeof b, "%9.4f", *v);
        return std::string(b);
      };
      std::snprintf(buf, sizeof buf, "  %-8s %5lld %s %s %8.4f  %s\n", std::string(to_string(r.phase)).c_str(),
                    static_cast<long long>(r.checkpoint_step), fmt(r.diversity).c_str(), fmt(r.orr).c_str(), r.asr,
                    (r.stop_attacker || r.stop_defender) ? "yes" : "no");
      out += buf;
    }
  }
  return out;
}

}  // namespace sectow
