// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "mbtirank/completion.hpp"
#include "mbtirank/error.hpp"
#include "mbtirank/grpo.hpp"
#include "mbtirank/metrics.hpp"
#include "mbtirank/pipeline.hpp"
#include "mbtirank/reward.hpp"
#include "mbtirank/service.hpp"
#include "mbtirank/text.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace mbtirank;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

std::vector<int> distinct_types(Rng& rng, int k) {
  std::vector<int> all(kTypeCount);
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < k; ++i) std::swap(all[i], all[uniform_int(rng, i, kTypeCount - 1)]);
  all.resize(k);
  return all;
}

RankedPrediction ranked_of(const std::vector<int>& idx) {
  std::vector<MbtiType> v;
  for (int i : idx) v.push_back(MbtiType::from_index(i));
  return RankedPrediction(std::move(v));
}

// ---------------------------------------------------------------------------
// Reward kernel against a 50-digit oracle over all ordered triples.

using Big = boost::multiprecision::cpp_bin_float_50;

Big oracle_similarity(const std::string& pred, const std::string& truth) {
  const Big eps("0.1");
  Big s = 0;
  for (int i = 1; i <= 4; ++i) {
    if (pred[i - 1] == truth[i - 1]) s += 1 + eps * i;
  }
  return s;
}

// Gains 2^s - 1 are memoized by value: s takes at most 16 distinct values.
Big oracle_gain(const Big& s) {
  static std::map<Big, Big> cache;
  auto it = cache.find(s);
  if (it == cache.end()) {
    it = cache.emplace(s, boost::multiprecision::pow(Big(2), s) - 1).first;
  }
  return it->second;
}

Big oracle_dcg(const std::vector<Big>& s) {
  static const std::array<Big, 3> log2_pos = {
      Big(1), boost::multiprecision::log(Big(3)) / boost::multiprecision::log(Big(2)),
      Big(2)};
  Big d = 0;
  for (std::size_t i = 0; i < s.size(); ++i) d += oracle_gain(s[i]) / log2_pos[i];
  return d;
}

Outcome reward_exactness() {
  const auto t0 = Clock::now();
  RewardConfig cfg;
  std::array<std::string, kTypeCount> codes;
  for (int t = 0; t < kTypeCount; ++t) {
    std::string c;
    c += (t & 8) ? 'I' : 'E';
    c += (t & 4) ? 'N' : 'S';
    c += (t & 2) ? 'F' : 'T';
    c += (t & 1) ? 'P' : 'J';
    codes[t] = c;
  }
  double max_err = 0.0;
  std::size_t cases = 0;
  for (int truth = 0; truth < kTypeCount; ++truth) {
    const MbtiType tt = MbtiType::parse(codes[truth]);
    for (int a = 0; a < kTypeCount; ++a) {
      for (int b = 0; b < kTypeCount; ++b) {
        if (b == a) continue;
        for (int c = 0; c < kTypeCount; ++c) {
          if (c == a || c == b) continue;
          const std::vector<Big> s{oracle_similarity(codes[a], codes[truth]),
                                   oracle_similarity(codes[b], codes[truth]),
                                   oracle_similarity(codes[c], codes[truth])};
          std::vector<Big> ideal = s;
          std::sort(ideal.begin(), ideal.end(), std::greater<>());
          const Big idcg = oracle_dcg(ideal);
          const Big expect = idcg == 0 ? Big(0) : oracle_dcg(s) / idcg;
          const RankedPrediction pred(
              {MbtiType::parse(codes[a]), MbtiType::parse(codes[b]), MbtiType::parse(codes[c])});
          const double got = ndcg_at_k(pred, tt, cfg);
          max_err = std::max(max_err, std::abs(got - expect.convert_to<double>()));
          const double sim = dim_similarity(pred[0], tt, cfg.dim_weight);
          max_err = std::max(max_err, std::abs(sim - s[0].convert_to<double>()));
          ++cases;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {cases == 53760 && max_err < 1e-9 && secs < 10.0,
          fmt("%zu cases, max abs error %.3g, %.2f s", cases, max_err, secs)};
}

Outcome anchor() {
  RewardConfig cfg;
  const auto truth = MbtiType::parse("INTJ");
  const RankedPrediction pred(
      {MbtiType::parse("INTJ"), MbtiType::parse("ENTP"), MbtiType::parse("INFJ")});
  const auto r = score_prediction(pred, truth, cfg);
  const bool ok = std::abs(r.ndcg - 0.9765) <= 1e-3 && std::abs(r.ds - 5.0) < 1e-12 &&
                  std::abs(r.total - 5.9765) <= 1e-3 && r.valid;
  return {ok, fmt("NDCG %.6f, DS %.6f, total %.6f", r.ndcg, r.ds, r.total)};
}

Outcome ndcg_optimality() {
  Rng rng(derive_seed(2024, 3));
  RewardConfig cfg;
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> set = distinct_types(rng, 3);
    const MbtiType truth = MbtiType::from_index(uniform_int(rng, 0, 15));
    std::vector<int> best = set;
    std::stable_sort(best.begin(), best.end(), [&](int x, int y) {
      return dim_similarity(MbtiType::from_index(x), truth) >
             dim_similarity(MbtiType::from_index(y), truth);
    });
    const double desc = ndcg_at_k(ranked_of(best), truth, cfg);
    std::sort(set.begin(), set.end());
    double max_perm = 0.0;
    do {
      max_perm = std::max(max_perm, ndcg_at_k(ranked_of(set), truth, cfg));
    } while (std::next_permutation(set.begin(), set.end()));
    if (desc < max_perm - 1e-12) ++violations;
  }
  return {violations == 0, fmt("1000 sets, %d violations", violations)};
}

// ---------------------------------------------------------------------------
// GRPO

Eigen::VectorXd random_vector(int n, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * standard_normal(rng);
  return v;
}

ToyPolicy random_policy(int d, int k, Heads heads, double scale, Rng& rng) {
  const int rows = heads == Heads::kShared ? d : d * k;
  Eigen::MatrixXd theta(rows, kTypeCount);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < kTypeCount; ++c) theta(r, c) = scale * standard_normal(rng);
  }
  return ToyPolicy(theta, k, heads);
}

// True when some token ratio sits within `margin` of a clip boundary, where
// the objective is not differentiable.
bool near_kink(const RolloutGroup& g, const ToyPolicy& p, double eps, double margin) {
  for (int i = 0; i < g.size(); ++i) {
    const auto lp = p.token_logprobs(g.features, g.completions[i]);
    for (std::size_t t = 0; t < lp.size(); ++t) {
      const double r = token_ratio(lp[t], g.old_logprobs[i][t]);
      if (std::abs(r - (1 + eps)) < margin || std::abs(r - (1 - eps)) < margin) return true;
    }
  }
  return false;
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(77, 1));
  GrpoConfig cfg;
  int checked = 0, clipped_instances = 0, rejected = 0;
  double worst = 0.0;
  int per_head[2] = {0, 0};
  while (checked < 200) {
    const int d = uniform_int(rng, 1, 8);
    const int k = uniform_int(rng, 1, 3);
    const int G = uniform_int(rng, 2, 8);
    const Heads heads = (checked % 2) ? Heads::kPerPosition : Heads::kShared;
    const ToyPolicy old_policy = random_policy(d, k, heads, 0.5, rng);
    ToyPolicy policy = old_policy;
    policy.theta() += random_policy(d, k, heads, 0.15, rng).theta();
    const ToyPolicy ref = random_policy(d, k, heads, 0.5, rng);
    const Eigen::VectorXd x = random_vector(d, rng);
    RolloutGroup g = sample_rollouts(old_policy, x, G, rng());
    attach_reference(g, ref);
    for (int i = 0; i < G; ++i) g.rewards.push_back(6.0 * uniform01(rng));
    g.advantages = group_advantages(g.rewards);
    cfg.kl_beta = 0.05 + 0.5 * uniform01(rng);
    cfg.clip_epsilon = 0.05 + 0.3 * uniform01(rng);
    if (near_kink(g, policy, cfg.clip_epsilon, 1e-3)) {
      ++rejected;
      continue;
    }

    const ObjectiveResult r = grpo_objective(g, policy, cfg);
    Eigen::MatrixXd fd(policy.theta().rows(), policy.theta().cols());
    const double h = 1e-6;
    for (Eigen::Index a = 0; a < fd.rows(); ++a) {
      for (Eigen::Index b = 0; b < fd.cols(); ++b) {
        ToyPolicy plus = policy, minus = policy;
        plus.theta()(a, b) += h;
        minus.theta()(a, b) -= h;
        fd(a, b) = (grpo_objective(g, plus, cfg).value - grpo_objective(g, minus, cfg).value) /
                   (2 * h);
      }
    }
    const double scale = std::max({r.gradient.norm(), fd.norm(), 1e-8});
    const double rel = (r.gradient - fd).norm() / scale;
    worst = std::max(worst, rel);
    if (r.clip_fraction > 0) ++clipped_instances;
    ++per_head[heads == Heads::kPerPosition];
    ++checked;
  }
  const double secs = seconds_since(t0);
  const bool ok = worst < 1e-4 && clipped_instances > 0 && secs < 60.0;
  return {ok, fmt("%d instances (%d shared, %d per-position, %d with clipped tokens, %d "
                  "near-kink draws skipped), worst relative error %.3g, %.2f s",
                  checked, per_head[0], per_head[1], clipped_instances, rejected, worst, secs)};
}

Outcome advantage_normalization() {
  Rng rng(derive_seed(5, 5));
  double worst_mean = 0.0, worst_std = 0.0;
  int groups = 0;
  while (groups < 1000) {
    const int G = uniform_int(rng, 2, 64);
    const double spread = std::pow(10.0, -6.0 + 8.0 * uniform01(rng));
    const double offset = 20.0 * uniform01(rng) - 10.0;
    std::vector<double> r(G);
    for (double& v : r) v = offset + spread * standard_normal(rng);
    double mean = std::accumulate(r.begin(), r.end(), 0.0) / G;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    if (std::sqrt(var / G) <= 1e-6) continue;
    const auto a = group_advantages(r);
    double am = 0.0;
    for (double v : a) am += v;
    am /= G;
    double av = 0.0;
    for (double v : a) av += (v - am) * (v - am);
    worst_mean = std::max(worst_mean, std::abs(am));
    worst_std = std::max(worst_std, std::abs(std::sqrt(av / G) - 1.0));
    ++groups;
  }
  bool zeros = true;
  for (int G = 2; G <= 32; ++G) {
    for (double v : {0.0, 5.9765, -1.25}) {
      for (double a : group_advantages(std::vector<double>(G, v))) zeros = zeros && a == 0.0;
    }
  }
  return {worst_mean < 1e-10 && worst_std < 1e-10 && zeros,
          fmt("1000 groups, max |mean| %.3g, max |std-1| %.3g, equal groups zero: %s",
              worst_mean, worst_std, zeros ? "yes" : "no")};
}

Outcome sequence_normalization() {
  Rng rng(derive_seed(9, 9));
  double worst = 0.0;
  for (int p = 0; p < 50; ++p) {
    const int k = 1 + p % 3;
    const int d = uniform_int(rng, 1, 6);
    const Heads heads = (p % 2) ? Heads::kPerPosition : Heads::kShared;
    const ToyPolicy policy = random_policy(d, k, heads, 1.5, rng);
    const Eigen::VectorXd x = random_vector(d, rng);
    double total = 0.0;
    std::vector<int> seq(k);
    std::function<void(int)> rec = [&](int pos) {
      if (pos == k) {
        total += std::exp(policy.sequence_logprob(x, seq));
        return;
      }
      for (int t = 0; t < kTypeCount; ++t) {
        if (std::find(seq.begin(), seq.begin() + pos, t) != seq.begin() + pos) continue;
        seq[pos] = t;
        rec(pos + 1);
      }
    };
    rec(0);
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {worst < 1e-8, fmt("50 policies, max |sum - 1| %.3g", worst)};
}

// Acceptance preset for the synthetic task.
SyntheticConfig synthetic_preset(std::uint64_t seed) {
  SyntheticConfig sc;
  sc.prototype_scale = 3.5;
  sc.seed = seed;
  return sc;
}

GrpoConfig grpo_preset(std::uint64_t seed) {
  GrpoConfig gc;
  gc.steps = 2000;
  gc.groups_per_step = 8;
  gc.seed = seed;
  return gc;
}

struct TrainRun {
  double initial = 0.0;
  double final = 0.0;
  std::vector<double> block_means;
  double seconds = 0.0;
};

TrainRun run_synthetic(std::uint64_t seed, RewardTerms terms) {
  const auto t0 = Clock::now();
  const SyntheticTask task = make_synthetic_task(synthetic_preset(seed));
  RewardConfig rc;
  TrainOptions opt;
  opt.terms = terms;
  opt.heads = Heads::kPerPosition;
  const TrainResult res = train(task.train, grpo_preset(seed), rc, opt);
  TrainRun out;
  out.initial = mean_ndcg(ToyPolicy(task.train.front().features.size(), rc.k, opt.heads),
                          task.test, rc, Decoding::kExpected);
  out.final = mean_ndcg(res.policy, task.test, rc, Decoding::kExpected);
  for (std::size_t b = 0; b + 100 <= res.log.size(); b += 100) {
    double s = 0.0;
    for (std::size_t i = b; i < b + 100; ++i) s += res.log[i].mean_reward;
    out.block_means.push_back(s / 100.0);
  }
  out.seconds = seconds_since(t0);
  return out;
}

const TrainRun& full_run(std::uint64_t seed) {
  static std::map<std::uint64_t, TrainRun> runs;
  auto it = runs.find(seed);
  if (it == runs.end()) it = runs.emplace(seed, run_synthetic(seed, {})).first;
  return it->second;
}

Outcome convergence() {
  const TrainRun& r = full_run(1);
  int drops = 0;
  for (std::size_t i = 1; i < r.block_means.size(); ++i) {
    if (r.block_means[i] < r.block_means[i - 1]) ++drops;
  }
  const bool ok = r.final >= 0.90 && r.final > r.initial && drops == 0 &&
                  r.block_means.size() == 20 && r.seconds < 300.0;
  return {ok, fmt("held-out NDCG@3 %.4f -> %.4f, %d decreases among 20 window-100 means "
                  "(%.3f -> %.3f), %.1f s",
                  r.initial, r.final, drops, r.block_means.front(), r.block_means.back(),
                  r.seconds)};
}

Outcome ablation() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double full = full_run(seed).final;
    const double no_ds = run_synthetic(seed, {true, false}).final;
    const double no_ndcg = run_synthetic(seed, {false, true}).final;
    if (no_ds < full && no_ndcg < full) ++wins;
    detail += fmt("%sseed %d: full %.4f, no-ds %.4f, no-ndcg %.4f", detail.empty() ? "" : "; ",
                  static_cast<int>(seed), full, no_ds, no_ndcg);
  }
  return {wins == 3, fmt("%d/3 seeds; ", wins) + detail};
}

// ---------------------------------------------------------------------------
// Pipeline

bool token_is_code(std::string_view tok) {
  static const std::set<std::string> codes = [] {
    std::set<std::string> s;
    for (const char* a : {"E", "I"})
      for (const char* b : {"S", "N"})
        for (const char* c : {"T", "F"})
          for (const char* d : {"J", "P"}) s.insert(std::string(a) + b + c + d);
    return s;
  }();
  std::string up(tok);
  for (char& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return codes.count(up) > 0;
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::string fuzz_post(Rng& rng) {
  static const std::vector<std::string> pieces = {
      "intj", "ENFP", "eStP", "xNTP", "ExFJ", "INTJs", "(INFP)", "infj.", "painting",
      "I", "am", "the", "NT", "entj!", "<MASK>", "ISTJ,ESTJ", "\xc3\xa9t\xc3\xa9", "..."};
  static const std::vector<std::string> seps = {" ", "  ", "\t", "\n", " \r\n "};
  std::string s;
  const int n = uniform_int(rng, 0, 30);
  if (uniform01(rng) < 0.3) s += seps[uniform_int(rng, 0, 4)];
  for (int i = 0; i < n; ++i) {
    if (uniform01(rng) < 0.3) {
      s += MbtiType::from_index(uniform_int(rng, 0, 15)).code();
      if (uniform01(rng) < 0.5) {
        for (std::size_t c = s.size() - 4; c < s.size(); ++c) {
          if (uniform01(rng) < 0.5) s[c] = static_cast<char>(std::tolower(s[c]));
        }
      }
    } else {
      s += pieces[uniform_int(rng, 0, static_cast<int>(pieces.size()) - 1)];
    }
    s += seps[uniform_int(rng, 0, 4)];
  }
  return s;
}

Outcome pipeline_invariants() {
  Rng rng(derive_seed(31, 7));
  std::vector<UserRecord> corpus;
  for (int i = 0; i < 1000; ++i) {
    UserRecord r;
    r.user_id = "u" + std::to_string(i);
    r.label = MbtiType::from_index(uniform_int(rng, 0, 15));
    const int posts = uniform_int(rng, 1, 8);
    for (int p = 0; p < posts; ++p) r.posts.push_back(fuzz_post(rng));
    corpus.push_back(std::move(r));
  }
  int leaks = 0, not_idempotent = 0, masked_tokens = 0;
  for (MaskMode mode : {MaskMode::kReplace, MaskMode::kRemove}) {
    for (bool wildcards : {false, true}) {
      PipelineConfig cfg;
      cfg.mask_mode = mode;
      cfg.mask_wildcards = wildcards;
      for (const UserRecord& r : corpus) {
        const UserRecord m = mask_labels(r, cfg);
        if (mask_labels(m, cfg).posts != m.posts) ++not_idempotent;
        for (std::size_t p = 0; p < m.posts.size(); ++p) {
          for (const auto& tok : whitespace_tokens(m.posts[p])) leaks += token_is_code(tok);
          if (mode == MaskMode::kReplace && !wildcards) {
            for (const auto& tok : whitespace_tokens(r.posts[p])) masked_tokens += token_is_code(tok);
          }
        }
      }
    }
  }

  // Fixture with known outcomes.
  PipelineConfig cfg;
  std::map<std::string, UserRecord> users;
  const auto add = [&](const char* id, const char* label) {
    UserRecord r;
    r.user_id = id;
    r.label = MbtiType::parse(label);
    r.posts = {"post"};
    users[id] = r;
  };
  add("keep1", "INTJ");
  add("keep2", "ESFP");
  add("absent", "ENFJ");
  add("dup", "ISTP");
  add("short", "INFP");
  add("notag", "ESTJ");
  const std::vector<TeacherSample> teacher{
      {"keep1", "<think>a</think><answer>[ENTJ, INTP, INTJ]</answer>"},
      {"absent", "<think>b</think><answer>[INTJ, INTP, ENTJ]</answer>"},
      {"ghost", "<think>c</think><answer>[INTJ, INTP, ENTJ]</answer>"},
      {"dup", "<answer>[ISTP, ISTP, ESTP]</answer>"},
      {"keep2", "<think>d</think><answer>[esfp, ESTP, ISFP]</answer>"},
      {"short", "<answer>[INFP, ENFP]</answer>"},
      {"notag", "ESTJ, ISTJ, ESFJ"},
  };
  const std::vector<std::pair<std::string, std::string>> expected{
      {"keep1", "kept"}, {"absent", "TruthAbsent"}, {"ghost", "UnknownUser"},
      {"dup", "ParseError"}, {"keep2", "kept"}, {"short", "ParseError"},
      {"notag", "ParseError"}};
  const FilterResult fr = rejection_filter(teacher, users, cfg);
  std::size_t ki = 0, ri = 0;
  bool partition_ok = fr.kept.size() + fr.rejected.size() == teacher.size();
  for (const auto& [id, what] : expected) {
    if (what == "kept") {
      partition_ok = partition_ok && ki < fr.kept.size() && fr.kept[ki].user_id == id &&
                     parse_completion(fr.kept[ki].completion, cfg.k).answers.contains(users[id].label);
      ++ki;
    } else {
      partition_ok = partition_ok && ri < fr.rejected.size() && fr.rejected[ri].user_id == id &&
                     to_string(fr.rejected[ri].reason) == what;
      ++ri;
    }
  }

  // Split disjointness over random subsets.
  int split_errors = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::set<std::string> sft;
    for (const auto& r : corpus) {
      if (uniform01(rng) < 0.3) sft.insert(r.user_id);
    }
    const Split s = split_sft_rl(corpus, sft);
    std::set<std::string> a, b;
    for (const auto& r : s.sft) a.insert(r.user_id);
    for (const auto& r : s.rl) b.insert(r.user_id);
    std::vector<std::string> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty() || a.size() + b.size() != corpus.size() || a != sft) ++split_errors;
  }

  const bool ok = leaks == 0 && not_idempotent == 0 && masked_tokens > 0 && partition_ok &&
                  split_errors == 0;
  return {ok, fmt("1000 fuzz records x 4 mask modes: %d leaked codes, %d idempotence "
                  "failures (%d codes masked); fixture partition %s; %d split errors",
                  leaks, not_idempotent, masked_tokens, partition_ok ? "correct" : "WRONG",
                  split_errors)};
}

// ---------------------------------------------------------------------------
// Metrics against a confusion-matrix oracle.

// rows: truth class, cols: predicted class, last col: no prediction.
using Confusion = std::vector<std::vector<long>>;

double oracle_f1(const Confusion& m, int classes, F1Average avg) {
  std::vector<double> tp(classes), fp(classes), fn(classes), support(classes);
  for (int t = 0; t < classes; ++t) {
    for (int p = 0; p <= classes; ++p) {
      support[t] += m[t][p];
      if (p == t) tp[t] += m[t][p];
      else fn[t] += m[t][p];
      if (p < classes && p != t) fp[p] += m[t][p];
    }
  }
  if (avg == F1Average::kMicro) {
    double T = 0, P = 0, N = 0;
    for (int c = 0; c < classes; ++c) T += tp[c], P += fp[c], N += fn[c];
    const double prec = T + P > 0 ? T / (T + P) : 0.0;
    const double rec = T + N > 0 ? T / (T + N) : 0.0;
    return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  }
  double sum = 0, wsum = 0;
  for (int c = 0; c < classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;
    const double prec = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double rec = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const double w = avg == F1Average::kWeighted ? support[c] : 1.0;
    sum += w * f;
    wsum += w;
  }
  return wsum > 0 ? sum / wsum : 0.0;
}

Outcome metrics_oracle() {
  Rng rng(derive_seed(123, 4));
  double worst = 0.0;
  int implication_checked = 0, implication_failed = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int n = uniform_int(rng, 1, 120);
    const double p_correct = inst % 10 == 0 ? 1.0 : uniform01(rng);
    const double p_missing = inst % 10 == 0 ? 0.0 : 0.2 * uniform01(rng);
    const int palette = uniform_int(rng, 1, 16);
    std::vector<MbtiType> truth;
    std::vector<std::optional<MbtiType>> pred;
    for (int i = 0; i < n; ++i) {
      truth.push_back(MbtiType::from_index(uniform_int(rng, 0, palette - 1)));
      if (uniform01(rng) < p_missing) pred.emplace_back(std::nullopt);
      else if (uniform01(rng) < p_correct) pred.emplace_back(truth.back());
      else pred.emplace_back(MbtiType::from_index(uniform_int(rng, 0, 15)));
    }
    Confusion multi(16, std::vector<long>(17));
    std::array<Confusion, 4> bin;
    for (auto& b : bin) b.assign(2, std::vector<long>(3));
    for (int i = 0; i < n; ++i) {
      const std::string tc = truth[i].code();
      multi[truth[i].index()][pred[i] ? pred[i]->index() : 16]++;
      for (int d = 0; d < 4; ++d) {
        const int tl = tc[d] == kAlphabet[d][1];
        const int pl = pred[i] ? (pred[i]->code()[d] == kAlphabet[d][1]) : 2;
        bin[d][tl][pl]++;
      }
    }
    for (F1Average avg : {F1Average::kMacro, F1Average::kMicro, F1Average::kWeighted}) {
      const double mc = multiclass_f1(pred, truth, avg);
      worst = std::max(worst, std::abs(mc - oracle_f1(multi, 16, avg)));
      const BinaryF1 b = binary_macro_f1(pred, truth, avg);
      double expect = 0.0;
      for (int d = 0; d < 4; ++d) {
        const double f = oracle_f1(bin[d], 2, avg);
        worst = std::max(worst, std::abs(b.per_dimension[d] - f));
        expect += f / 4;
      }
      worst = std::max(worst, std::abs(b.average - expect));
      if (mc == 1.0) {
        ++implication_checked;
        if (b.average != 1.0) ++implication_failed;
      }
    }
  }
  return {worst < 1e-12 && implication_checked > 0 && implication_failed == 0,
          fmt("1000 instances x 3 averages, max abs diff %.3g; multiclass=1 cases %d, "
              "binary!=1 among them %d",
              worst, implication_checked, implication_failed)};
}

// ---------------------------------------------------------------------------
// Parser

Outcome parser_fuzz() {
  Rng rng(derive_seed(404, 1));
  static const std::vector<std::string> frags = {
      "<think>", "</think>", "<answer>", "</answer>", "[", "]", ",", " ", "INTJ", "enfp",
      "ABCD", "\n", "<", ">", "/", "xNTP", "\0", "\xff", "]]", "[[", ", ,", "<answer"};
  int aborted = 0, valid = 0, reward_mismatch = 0;
  RewardConfig cfg;
  for (int i = 0; i < 100000; ++i) {
    std::string s;
    const int len = uniform_int(rng, 0, 40);
    const bool structured = i % 2 == 0;
    for (int j = 0; j < len; ++j) {
      if (structured) s += frags[uniform_int(rng, 0, static_cast<int>(frags.size()) - 1)];
      else s += static_cast<char>(uniform_int(rng, 0, 255));
    }
    const int k = uniform_int(rng, 1, 4);
    try {
      const auto outcome = try_parse_completion(s, k);
      valid += std::holds_alternative<ParsedCompletion>(outcome);
      try {
        parse_completion(s, k);
      } catch (const CompletionError&) {
      }
      cfg.k = k;
      const auto r = total_reward(s, MbtiType::from_index(i % 16), cfg);
      if (r.valid != std::holds_alternative<ParsedCompletion>(outcome)) ++reward_mismatch;
    } catch (...) {
      ++aborted;
    }
  }

  int roundtrip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string think;
    const int len = uniform_int(rng, 0, 60);
    for (int j = 0; j < len; ++j) {
      think += uniform01(rng) < 0.1 ? frags[uniform_int(rng, 0, 5)]
                                     : std::string(1, static_cast<char>(uniform_int(rng, 1, 255)));
    }
    if (think.find("</think>") != std::string::npos) {
      --i;
      continue;
    }
    const int k = uniform_int(rng, 1, 16);
    const RankedPrediction answers = ranked_of(distinct_types(rng, k));
    const std::string text = format_sft_target(think, answers);
    const auto outcome = try_parse_completion(text, k);
    const auto* p = std::get_if<ParsedCompletion>(&outcome);
    if (!p || p->think != think || !(p->answers == answers) ||
        format_sft_target(p->think, p->answers) != text) {
      ++roundtrip_failures;
    }
  }
  return {aborted == 0 && reward_mismatch == 0 && roundtrip_failures == 0,
          fmt("100000 random strings: %d aborts (%d parsed as valid, %d reward/parse "
              "disagreements); 10000 round trips: %d failures",
              aborted, valid, reward_mismatch, roundtrip_failures)};
}

// ---------------------------------------------------------------------------
// Service differential test over loopback HTTP.

bool close12(double a, double b) {
  if (a == b) return true;
  return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

Outcome service_differential() {
  ServiceConfig cfg;
  cfg.port = 0;
  RewardServer server(cfg);
  if (!server.bind()) return {false, "could not bind a loopback port"};
  std::thread worker([&] { server.serve(); });
  httplib::Client client("127.0.0.1", server.port());
  client.set_connection_timeout(5);
  client.set_read_timeout(10);

  Rng rng(derive_seed(8077, 2));
  int mismatches = 0, transport = 0, compared = 0;
  for (int req_i = 0; req_i < 500; ++req_i) {
    RewardConfig rc;
    json req;
    if (uniform01(rng) < 0.5) {
      rc.k = uniform_int(rng, 1, 5);
      req["k"] = rc.k;
    }
    if (uniform01(rng) < 0.5) {
      rc.dim_weight.epsilon = 0.5 * uniform01(rng);
      req["dim_weight_epsilon"] = rc.dim_weight.epsilon;
    }
    const MbtiType truth = MbtiType::from_index(uniform_int(rng, 0, 15));
    req["ground_truth"] = truth.code();
    const int n = uniform_int(rng, 1, 12);
    std::vector<std::string> comps;
    for (int i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      const int len = u < 0.7 ? rc.k : uniform_int(rng, 1, 5);
      std::string c = format_sft_target("r" + std::to_string(i), ranked_of(distinct_types(rng, len)));
      if (u > 0.9) c = c.substr(0, c.size() / 2);
      comps.push_back(c);
    }
    req["completions"] = comps;

    auto res = client.Post("/v1/score", req.dump(), "application/json");
    if (!res || res->status != 200) {
      ++transport;
      continue;
    }
    const json body = json::parse(res->body);
    std::vector<double> totals;
    bool ok = body["results"].size() == comps.size();
    for (std::size_t i = 0; ok && i < comps.size(); ++i) {
      const RewardBreakdown lib = total_reward(comps[i], truth, rc);
      const json& got = body["results"][i];
      ok = ok && got["valid"] == lib.valid && close12(got["ndcg"].get<double>(), lib.ndcg) &&
           close12(got["ds"].get<double>(), lib.ds) &&
           close12(got["total"].get<double>(), lib.total);
      totals.push_back(lib.total);
      ++compared;
    }
    if (ok) {
      double mean = std::accumulate(totals.begin(), totals.end(), 0.0) / totals.size();
      double var = 0.0;
      for (double t : totals) var += (t - mean) * (t - mean);
      ok = close12(body["group"]["mean"].get<double>(), mean) &&
           close12(body["group"]["std"].get<double>(), std::sqrt(var / totals.size()));
      if (totals.size() >= 2) {
        const auto adv = group_advantages(totals);
        for (std::size_t i = 0; ok && i < adv.size(); ++i) {
          ok = close12(body["group"]["advantages"][i].get<double>(), adv[i]);
        }
      } else {
        ok = ok && !body["group"].contains("advantages");
      }
    }
    if (!ok) ++mismatches;
  }
  server.stop();
  worker.join();
  return {mismatches == 0 && transport == 0,
          fmt("500 requests (%d completions): %d mismatches, %d transport errors", compared,
              mismatches, transport)};
}

}  // namespace

// With an argument, runs only the criterion at that 1-based position.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"reward kernel exactness vs 50-digit oracle", reward_exactness},
      {"hand-verified anchor", anchor},
      {"NDCG optimality of descending order", ndcg_optimality},
      {"GRPO analytic gradient vs finite differences", gradient_check},
      {"advantage normalization", advantage_normalization},
      {"sequence probabilities sum to one", sequence_normalization},
      {"toy training convergence", convergence},
      {"ablation direction", ablation},
      {"pipeline invariants", pipeline_invariants},
      {"metrics match confusion-matrix oracle", metrics_oracle},
      {"parser fuzz and round trip", parser_fuzz},
      {"service differential over HTTP", service_differential},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  if (only < 0 || only > static_cast<int>(criteria.size())) return 2;
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    const auto& [name, fn] = criteria[i];
    ++ran;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  if (!only) std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed;
}
