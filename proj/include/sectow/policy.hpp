#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sectow/arena.hpp"
#include "sectow/error.hpp"
#include "sectow/rng.hpp"
#include "sectow/tokens.hpp"

namespace sectow {

// Logit table: one categorical distribution over `vocab` tokens per context row.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(int rows, int vocab, double init = 0.0)
      : rows_(rows), vocab_(vocab), theta_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(vocab), init) {
    require(rows > 0 && vocab > 1, "policy shape must be positive");
  }

  int rows() const { return rows_; }
  int vocab() const { return vocab_; }
  std::size_t size() const { return theta_.size(); }

  std::span<const double> row(int r) const { return {theta_.data() + offset(r), static_cast<std::size_t>(vocab_)}; }
  std::span<double> row(int r) { return {theta_.data() + offset(r), static_cast<std::size_t>(vocab_)}; }

  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }

  bool same_shape(const TabularPolicy& other) const { return rows_ == other.rows_ && vocab_ == other.vocab_; }

  // Effective logit of `token` at row `r`.
  double logit(int r, int token) const { return row(r)[static_cast<std::size_t>(token)]; }

  // Natural-log probability of `token` at row `r` (temperature 1).
  double log_prob(int r, int token) const {
    double m = logit(r, 0);
    for (int j = 1; j < vocab_; ++j) m = std::max(m, logit(r, j));
    double z = 0.0;
    for (int j = 0; j < vocab_; ++j) z += std::exp(logit(r, j) - m);
    return logit(r, token) - m - std::log(z);
  }

  // softmax(logits / temperature) into `out`.
  void probs(int r, double temperature, std::span<double> out) const {
    double m = logit(r, 0);
    for (int j = 1; j < vocab_; ++j) m = std::max(m, logit(r, j));
    double z = 0.0;
    for (int j = 0; j < vocab_; ++j) {
      out[static_cast<std::size_t>(j)] = std::exp((logit(r, j) - m) / temperature);
      z += out[static_cast<std::size_t>(j)];
    }
    for (auto& p : out) p /= z;
  }

  // Adds `g` (one entry per token) into the gradient slice of row r.
  void add_row_gradient(std::vector<double>& grad, int r, std::span<const double> g) const {
    double* dst = grad.data() + offset(r);
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
  }

  void check_row_finite(int r) const {
    for (int j = 0; j < vocab_; ++j)
      if (!std::isfinite(logit(r, j)))
        fail(ErrorKind::NonFinite, "non-finite logit in context row " + std::to_string(r));
  }

  void check_finite() const {
    for (int r = 0; r < rows_; ++r) check_row_finite(r);
  }

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  std::size_t offset(int r) const {
    if (r < 0 || r >= rows_) fail(ErrorKind::InvalidArgument, "context row out of range: " + std::to_string(r));
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(vocab_);
  }

  int rows_ = 0;
  int vocab_ = 0;
  std::vector<double> theta_;
};

// A sampled (or scored) sequence together with the context rows it visited.
struct Generation {
  TokenSeq tokens;
  std::vector<int> rows;
  std::vector<double> logprobs;
  double total_logprob = 0.0;
};

enum class Role { Defender, Attacker };

inline std::string_view to_string(Role r) { return r == Role::Defender ? "DEFENDER" : "ATTACKER"; }

// What the policy is conditioned on besides its own previous token.
// mode 0: defender / attacker generate-new prompt; mode 1: attacker refine prompt.
struct Conditioning {
  int digest = 0;
  int mode = 0;
};

inline constexpr int kNumModes = 2;
inline constexpr int kContextRows = kNumDigests * kNumModes * kVocabSize;

inline Conditioning defender_conditioning(std::span<const int> query) { return {query_digest(query), 0}; }

// Arena policy (defender M_D or attacker M_A) over the 28-token vocabulary.
//
// Context rows are indexed by (digest, mode, previous token). The defender's
// digest only selects the row of the opening response token; continuation
// rows are keyed on the previous token alone (digest 0, mode 0), so what the
// defender learns after COMPLY on one query carries over to every other
// query. The attacker keeps its mode everywhere but its digest only at the
// start of the output and of the answer, so query-writing skill is shared
// across inputs while the opening of each answer stays input specific.
class Policy {
 public:
  explicit Policy(Role role = Role::Defender) : role_(role), table_(kContextRows, kVocabSize, 0.0) {}

  Role role() const { return role_; }
  TabularPolicy& table() { return table_; }
  const TabularPolicy& table() const { return table_; }

  int iteration() const { return iteration_; }
  std::int64_t step() const { return step_; }
  void set_lineage(int iteration, std::int64_t step) {
    iteration_ = iteration;
    step_ = step;
  }
  std::string version() const {
    return std::string(to_string(role_)) + ":" + std::to_string(iteration_) + ":" + std::to_string(step_);
  }

  int context_row(Conditioning c, int prev) const {
    if (c.digest < 0 || c.digest >= kNumDigests) fail(ErrorKind::InvalidArgument, "digest out of range");
    if (c.mode < 0 || c.mode >= kNumModes) fail(ErrorKind::InvalidArgument, "mode out of range");
    if (!valid_token(prev)) fail(ErrorKind::InvalidArgument, "previous token out of range");
    if (role_ == Role::Defender) {
      if (c.mode != 0) fail(ErrorKind::InvalidArgument, "defender uses mode 0 only");
      if (prev != tok::kBos) return row_index(0, 0, prev);
    } else if (prev != tok::kBos && prev != tok::kAnsOpen) {
      return row_index(0, c.mode, prev);
    }
    return row_index(c.digest, c.mode, prev);
  }

  static constexpr int row_index(int digest, int mode, int prev) { return (digest * kNumModes + mode) * kVocabSize + prev; }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  Role role_;
  TabularPolicy table_;
  int iteration_ = 0;
  std::int64_t step_ = 0;
};

inline std::vector<int> context_rows(const Policy& policy, Conditioning cond, std::span<const int> tokens) {
  std::vector<int> rows;
  rows.reserve(tokens.size());
  int prev = tok::kBos;
  for (int t : tokens) {
    rows.push_back(policy.context_row(cond, prev));
    prev = t;
  }
  return rows;
}

// Autoregressive sampling from softmax(theta[ctx] / temperature), starting
// after BOS and stopping after EOS or max_len tokens. Recorded logprobs are
// always at temperature 1.
inline Generation sample(const Policy& policy, Conditioning cond, int max_len, double temperature, Rng& rng) {
  require(temperature > 0.0, "temperature must be positive");
  require(max_len >= 1, "max_len must be at least 1");
  const auto& table = policy.table();
  std::vector<double> p(static_cast<std::size_t>(table.vocab()));
  Generation g;
  int prev = tok::kBos;
  for (int i = 0; i < max_len; ++i) {
    const int r = policy.context_row(cond, prev);
    table.check_row_finite(r);
    table.probs(r, temperature, p);
    const int t = static_cast<int>(rng.categorical(p));
    const double lp = table.log_prob(r, t);
    g.tokens.push_back(t);
    g.rows.push_back(r);
    g.logprobs.push_back(lp);
    g.total_logprob += lp;
    if (t == tok::kEos) break;
    prev = t;
  }
  return g;
}

inline std::vector<double> log_prob(const TabularPolicy& table, std::span<const int> rows, std::span<const int> tokens) {
  require(!tokens.empty(), "token sequence must be non-empty");
  require(rows.size() == tokens.size(), "rows and tokens differ in length");
  std::vector<double> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= table.vocab())
      fail(ErrorKind::InvalidArgument, "token id out of range: " + std::to_string(tokens[i]));
    out.push_back(table.log_prob(rows[i], tokens[i]));
  }
  return out;
}

inline std::vector<double> log_prob(const Policy& policy, Conditioning cond, std::span<const int> tokens) {
  require(!tokens.empty(), "token sequence must be non-empty");
  for (int t : tokens)
    if (!valid_token(t)) fail(ErrorKind::InvalidArgument, "token id out of range: " + std::to_string(t));
  const auto rows = context_rows(policy, cond, tokens);
  return log_prob(policy.table(), rows, tokens);
}

inline Generation score(const Policy& policy, Conditioning cond, std::span<const int> tokens) {
  Generation g;
  g.tokens.assign(tokens.begin(), tokens.end());
  g.rows = context_rows(policy, cond, tokens);
  g.logprobs = log_prob(policy.table(), g.rows, g.tokens);
  for (double lp : g.logprobs) g.total_logprob += lp;
  return g;
}

// ---------------------------------------------------------------------------
// Supervised fine-tuning

// Target sequence plus the rows its tokens are predicted from.
struct Trajectory {
  std::vector<int> rows;
  TokenSeq tokens;
};

struct SftExample {
  Conditioning cond;
  TokenSeq target;
};

struct SftResult {
  double loss = 0.0;  // before the update
  double grad_norm = 0.0;
};

// Mean per-token cross-entropy and its gradient (softmax - onehot per
// visited row, scaled by 1 / token count). `grad` is resized and overwritten.
inline double sft_loss_and_gradient(const TabularPolicy& table, std::span<const Trajectory> batch, std::vector<double>& grad) {
  require(!batch.empty(), "SFT batch must be non-empty");
  std::size_t n_tokens = 0;
  for (const auto& t : batch) {
    require(t.rows.size() == t.tokens.size() && !t.tokens.empty(), "malformed trajectory");
    n_tokens += t.tokens.size();
  }
  grad.assign(table.size(), 0.0);
  std::vector<double> p(static_cast<std::size_t>(table.vocab()));
  const double w = 1.0 / static_cast<double>(n_tokens);
  double loss = 0.0;
  for (const auto& t : batch) {
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
      const int r = t.rows[i];
      table.check_row_finite(r);
      loss -= w * table.log_prob(r, t.tokens[i]);
      table.probs(r, 1.0, p);
      for (auto& x : p) x *= w;
      p[static_cast<std::size_t>(t.tokens[i])] -= w;
      table.add_row_gradient(grad, r, p);
    }
  }
  return loss;
}

inline SftResult sft_step(TabularPolicy& table, std::span<const Trajectory> batch, double lr) {
  if (!(lr > 0.0)) fail(ErrorKind::InvalidArgument, "learning rate must be positive");
  std::vector<double> grad;
  SftResult res;
  res.loss = sft_loss_and_gradient(table, batch, grad);
  double sq = 0.0;
  auto& theta = table.theta();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    sq += grad[i] * grad[i];
    theta[i] -= lr * grad[i];
  }
  res.grad_norm = std::sqrt(sq);
  return res;
}

inline std::vector<Trajectory> to_trajectories(const Policy& policy, std::span<const SftExample> batch) {
  std::vector<Trajectory> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) {
    require(!ex.target.empty(), "SFT target must be non-empty");
    for (int t : ex.target)
      if (!valid_token(t)) fail(ErrorKind::InvalidArgument, "target token out of range");
    out.push_back({context_rows(policy, ex.cond, ex.target), ex.target});
  }
  return out;
}

inline SftResult sft_step(Policy& policy, std::span<const SftExample> batch, double lr) {
  const auto traj = to_trajectories(policy, batch);
  return sft_step(policy.table(), traj, lr);
}

}  // namespace sectow
