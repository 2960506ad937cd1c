// mbtirank: data preparation, reward scoring, toy GRPO training, evaluation
// and the reward service behind one binary.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "mbtirank/completion.hpp"
#include "mbtirank/error.hpp"
#include "mbtirank/grpo.hpp"
#include "mbtirank/io.hpp"
#include "mbtirank/metrics.hpp"
#include "mbtirank/pipeline.hpp"
#include "mbtirank/reward.hpp"
#include "mbtirank/service.hpp"
#include "mbtirank/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mbtirank;

namespace {

constexpr int kExitUsage = 2;

struct Globals {
  std::uint64_t seed = 0;
  bool verbose = false;
};

void log(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << msg << '\n';
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kFileNotFound,
                "cannot write '" + path.string() + "'");
  }
  return out;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kFileNotFound,
                "cannot open '" + path.string() + "'");
  }
  return in;
}

json breakdown_json(const RewardBreakdown& r) {
  json j;
  j["valid"] = r.valid;
  j["ndcg"] = r.ndcg;
  j["ds"] = r.ds;
  j["total"] = r.total;
  if (!r.valid) j["parse_error"] = r.parse_error;
  return j;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareArgs {
  fs::path input;
  fs::path csv;
  fs::path teacher;
  fs::path out_dir = "prepared";
  std::size_t max_kept = 0;
  std::string mask_mode = "replace";
  PipelineConfig cfg;
};

int cmd_prepare(const PrepareArgs& a, const Globals& g) {
  PipelineConfig cfg = a.cfg;
  cfg.mask_mode = a.mask_mode == "remove" ? MaskMode::kRemove
                                          : MaskMode::kReplace;
  cfg.validate();
  if (a.input.empty() == a.csv.empty()) {
    throw Error(ErrorCode::kConfigInvalid,
                "exactly one of --input or --csv is required");
  }
  std::vector<UserRecord> raw =
      a.input.empty() ? convert_kaggle_csv(a.csv) : ingest(a.input);
  log(g, "read " + std::to_string(raw.size()) + " records");

  std::vector<UserRecord> records;
  records.reserve(raw.size());
  std::map<std::string, UserRecord> by_id;
  for (const UserRecord& r : raw) {
    records.push_back(truncate(mask_labels(r, cfg), cfg));
    by_id.emplace(records.back().user_id, records.back());
  }

  FilterResult filtered;
  if (!a.teacher.empty()) {
    filtered = rejection_filter(read_teacher(a.teacher), by_id, cfg);
    if (a.max_kept > 0) {
      filtered.kept = select_kept(filtered.kept, a.max_kept, g.seed);
    }
  }
  std::set<std::string> sft_ids;
  for (const SftSample& s : filtered.kept) sft_ids.insert(s.user_id);
  const Split split = split_sft_rl(records, sft_ids);

  fs::create_directories(a.out_dir);
  {
    auto out = open_output(a.out_dir / "records.jsonl");
    write_records(out, records);
  }
  {
    auto out = open_output(a.out_dir / "sft.jsonl");
    write_sft(out, filtered.kept);
  }
  {
    auto out = open_output(a.out_dir / "rl.jsonl");
    write_records(out, split.rl);
  }
  {
    auto out = open_output(a.out_dir / "rejections.jsonl");
    write_rejections(out, filtered.rejected);
  }
  if (!a.teacher.empty() && filtered.kept.empty()) {
    std::cerr << "warning: no teacher samples were kept\n";
  }
  std::cout << "records " << records.size() << "\n"
            << "kept " << filtered.kept.size() << "\n"
            << "rejected " << filtered.rejected.size() << "\n"
            << "sft " << split.sft.size() << "\n"
            << "rl " << split.rl.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
  std::string completion;
  std::string truth;
  fs::path file;
  fs::path out;
  int k = 3;
  double epsilon = 0.1;
  bool lenient = false;
};

int cmd_score(const ScoreArgs& a, const Globals&) {
  RewardConfig rc;
  rc.k = a.k;
  rc.dim_weight.epsilon = a.epsilon;
  rc.validate();
  ParseOptions po;
  po.lenient_closer = a.lenient;

  std::vector<std::string> lines;
  if (!a.file.empty()) {
    auto in = open_input(a.file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("completion") ||
          !j["completion"].is_string()) {
        throw SchemaError(lineno, "needs a string 'completion'");
      }
      std::string truth_text;
      for (const char* key : {"ground_truth", "label"}) {
        if (j.contains(key) && j[key].is_string()) {
          truth_text = j[key].get<std::string>();
          break;
        }
      }
      const auto truth = MbtiType::try_parse(truth_text);
      if (!truth) throw SchemaError(lineno, "InvalidType");
      json row = breakdown_json(
          total_reward(j["completion"].get<std::string>(), *truth, rc, {}, po));
      if (j.contains("user_id")) row["user_id"] = j["user_id"];
      lines.push_back(row.dump());
    }
  } else {
    if (a.completion.empty() && a.truth.empty()) {
      throw Error(ErrorCode::kConfigInvalid,
                  "give --completion and --truth, or --file");
    }
    const MbtiType truth = parse_type(a.truth);
    lines.push_back(
        breakdown_json(total_reward(a.completion, truth, rc, {}, po)).dump());
  }

  if (a.out.empty()) {
    for (const auto& l : lines) std::cout << l << '\n';
  } else {
    auto out = open_output(a.out);
    for (const auto& l : lines) out << l << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  bool synthetic = false;
  fs::path data;
  fs::path test_data;
  fs::path init_policy;
  fs::path log_path = "train_log.jsonl";
  fs::path policy_out = "policy.json";
  bool no_ds = false;
  bool no_ndcg = false;
  std::string heads = "shared";
  int k = 3;
  double epsilon = 0.1;
  GrpoConfig grpo;
  SyntheticConfig synth;
};

std::vector<Example> read_examples(const fs::path& path) {
  auto in = open_input(path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw SchemaError(lineno, "not a JSON object");
    }
    if (!j.contains("features") || !j["features"].is_array() ||
        j["features"].empty()) {
      throw SchemaError(lineno, "features must be a non-empty array");
    }
    if (!j.contains("label") || !j["label"].is_string()) {
      throw SchemaError(lineno, "missing label");
    }
    const auto label = MbtiType::try_parse(j["label"].get<std::string>());
    if (!label) throw SchemaError(lineno, "InvalidType");
    Eigen::VectorXd x(static_cast<Eigen::Index>(j["features"].size()));
    for (std::size_t i = 0; i < j["features"].size(); ++i) {
      if (!j["features"][i].is_number()) {
        throw SchemaError(lineno, "features must be numbers");
      }
      x[static_cast<Eigen::Index>(i)] = j["features"][i].get<double>();
    }
    if (!out.empty() && out.front().features.size() != x.size()) {
      throw SchemaError(lineno, "feature length differs from line 1");
    }
    out.push_back({std::move(x), *label});
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyInput, "no examples");
  return out;
}

int cmd_train(const TrainArgs& a, const Globals& g) {
  RewardConfig rc;
  rc.k = a.k;
  rc.dim_weight.epsilon = a.epsilon;
  rc.validate();
  GrpoConfig gc = a.grpo;
  gc.seed = g.seed;
  if (gc.steps != 0) gc.validate();

  std::vector<Example> train_set;
  std::vector<Example> test_set;
  if (a.synthetic == !a.data.empty()) {
    throw Error(ErrorCode::kConfigInvalid,
                "exactly one of --synthetic or --data is required");
  }
  if (a.synthetic) {
    SyntheticConfig sc = a.synth;
    sc.seed = g.seed;
    SyntheticTask task = make_synthetic_task(sc);
    train_set = std::move(task.train);
    test_set = std::move(task.test);
  } else {
    train_set = read_examples(a.data);
    if (!a.test_data.empty()) test_set = read_examples(a.test_data);
  }

  TrainOptions opt;
  opt.terms = {!a.no_ndcg, !a.no_ds};
  opt.heads = a.heads == "per-position" ? Heads::kPerPosition : Heads::kShared;
  if (!a.init_policy.empty()) {
    auto in = open_input(a.init_policy);
    opt.initial = load_policy(in);
  } else {
    opt.initial = ToyPolicy(static_cast<int>(train_set.front().features.size()),
                            rc.k, opt.heads);
  }
  if (opt.initial->k() != rc.k) {
    throw Error(ErrorCode::kConfigInvalid, "policy k differs from --k");
  }
  opt.initial->check_features(train_set.front().features);

  auto log_out = open_output(a.log_path);
  opt.on_step = [&](const StepLog& s) {
    write_step_log(log_out, s);
    if (g.verbose && (s.step % 100 == 0)) {
      std::cerr << "step " << s.step << " reward " << s.mean_reward
                << " ndcg " << s.mean_ndcg << '\n';
    }
  };

  TrainResult result{*opt.initial, {}};
  if (gc.steps > 0) result = train(train_set, gc, rc, opt);

  {
    auto out = open_output(a.policy_out);
    save_policy(out, result.policy);
  }
  std::cout << "steps " << result.log.size() << '\n';
  if (!test_set.empty()) {
    std::cout << "heldout_ndcg_initial "
              << mean_ndcg(*opt.initial, test_set, rc, Decoding::kExpected)
              << '\n';
    std::cout << "heldout_ndcg "
              << mean_ndcg(result.policy, test_set, rc, Decoding::kExpected)
              << '\n'
              << "heldout_ndcg_greedy "
              << mean_ndcg(result.policy, test_set, rc, Decoding::kGreedy)
              << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  fs::path pred;
  fs::path truth;
  fs::path out;
  bool strict = false;
  bool lenient = false;
  std::string average = "macro";
  int k = 3;
  double epsilon = 0.1;
};

int cmd_eval(const EvalArgs& a, const Globals&) {
  RewardConfig rc;
  rc.k = a.k;
  rc.dim_weight.epsilon = a.epsilon;
  EvalFileOptions opt;
  opt.strict = a.strict;
  opt.average = parse_f1_average(a.average);
  opt.parse.lenient_closer = a.lenient;
  const EvalReport report = evaluate_file(a.pred, a.truth, rc, opt);
  std::cout << format_report(report);
  if (!a.out.empty()) {
    auto out = open_output(a.out);
    out << report_json(report) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// serve

int cmd_serve(const ServiceConfig& cfg, const Globals& g) {
  RewardConfig rc;
  rc.k = cfg.k;
  rc.dim_weight.epsilon = cfg.epsilon;
  rc.validate();

  // Block the shutdown signals before any worker thread exists so that only
  // sigwait below sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  RewardServer server(cfg);
  if (!server.bind()) {
    std::cerr << "error: cannot bind " << cfg.host << ':' << cfg.port << '\n';
    return kExitUsage;
  }
  std::cerr << "serving on " << cfg.host << ':' << server.port() << '\n';
  std::thread worker([&] { server.serve(); });

  int sig = 0;
  sigwait(&signals, &sig);
  log(g, std::string("received ") + (sig == SIGINT ? "SIGINT" : "SIGTERM"));
  server.stop();
  worker.join();
  std::cerr << "stopped\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MBTI ranking-reward toolkit"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value file (section.key = value)");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")
      ->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");

  // prepare
  PrepareArgs pa;
  auto* prepare = app.add_subcommand(
      "prepare", "Mask, truncate, filter teacher samples and split users");
  prepare->add_option("--input", pa.input, "User records (JSONL)")
      ->check(CLI::ExistingFile);
  prepare->add_option("--csv", pa.csv, "type,posts CSV dump")
      ->check(CLI::ExistingFile);
  prepare->add_option("--teacher", pa.teacher,
                      "Teacher completions (JSONL user_id, completion)")
      ->check(CLI::ExistingFile);
  prepare->add_option("--out-dir", pa.out_dir, "Output directory")
      ->capture_default_str();
  prepare->add_option("--max-kept", pa.max_kept,
                      "Keep at most this many SFT samples (0 = all)")
      ->capture_default_str();
  prepare->add_option("--max-posts", pa.cfg.max_posts_per_user,
                      "Posts kept per user")
      ->capture_default_str();
  prepare->add_option("--max-tokens", pa.cfg.max_tokens_per_post,
                      "Whitespace tokens kept per post")
      ->capture_default_str();
  prepare->add_option("--k", pa.cfg.k, "Ranked answers per completion")
      ->capture_default_str();
  prepare->add_option("--mask-token", pa.cfg.mask_token, "Replacement token")
      ->capture_default_str();
  prepare->add_option("--mask-mode", pa.mask_mode, "replace or remove")
      ->check(CLI::IsMember({"replace", "remove"}))
      ->capture_default_str();
  prepare->add_flag("--mask-wildcards", pa.cfg.mask_wildcards,
                    "Also mask codes written with x wildcards");

  // score
  ScoreArgs sa;
  auto* score = app.add_subcommand("score", "Score completions");
  score->add_option("--completion", sa.completion, "Completion text");
  score->add_option("--truth", sa.truth, "True type code");
  score->add_option("--file", sa.file,
                    "JSONL with completion and ground_truth (or label)");
  score->add_option("--out", sa.out, "Write rows here instead of stdout");
  score->add_option("--k", sa.k, "Ranked answers expected")
      ->capture_default_str();
  score->add_option("--epsilon", sa.epsilon, "Dimension weight coefficient")
      ->capture_default_str();
  score->add_flag("--lenient", sa.lenient,
                  "Accept a second <answer> as the closing tag");

  // train
  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "GRPO training of the toy policy");
  trainc->add_flag("--synthetic", ta.synthetic, "Use the synthetic task");
  trainc->add_option("--data", ta.data,
                     "Training examples (JSONL features, label)");
  trainc->add_option("--test-data", ta.test_data, "Held-out examples");
  trainc->add_option("--init-policy", ta.init_policy, "Starting weights");
  trainc->add_option("--log", ta.log_path, "Per-step JSONL log")
      ->capture_default_str();
  trainc->add_option("--policy-out", ta.policy_out, "Final weights")
      ->capture_default_str();
  trainc->add_flag("--no-ds-reward", ta.no_ds, "Drop the similarity term");
  trainc->add_flag("--no-ndcg-reward", ta.no_ndcg, "Drop the NDCG term");
  trainc->add_option("--heads", ta.heads, "shared or per-position")
      ->check(CLI::IsMember({"shared", "per-position"}))
      ->capture_default_str();
  trainc->add_option("--k", ta.k, "Ranked answers")->capture_default_str();
  trainc->add_option("--epsilon", ta.epsilon, "Dimension weight coefficient")
      ->capture_default_str();
  trainc->add_option("--steps", ta.grpo.steps, "Optimizer steps")
      ->capture_default_str();
  trainc->add_option("--group-size", ta.grpo.group_size, "Rollouts per group")
      ->capture_default_str();
  trainc->add_option("--groups-per-step", ta.grpo.groups_per_step,
                     "Prompt groups per step")
      ->capture_default_str();
  trainc->add_option("--lr", ta.grpo.learning_rate, "Learning rate")
      ->capture_default_str();
  trainc->add_option("--clip-epsilon", ta.grpo.clip_epsilon, "Ratio clip")
      ->capture_default_str();
  trainc->add_option("--kl-beta", ta.grpo.kl_beta, "KL coefficient")
      ->capture_default_str();
  trainc->add_option("--feature-dim", ta.synth.feature_dim,
                     "Synthetic feature dimension")
      ->capture_default_str();
  trainc->add_option("--noise", ta.synth.noise_sigma, "Synthetic noise sigma")
      ->capture_default_str();
  trainc->add_option("--prototype-scale", ta.synth.prototype_scale,
                     "Synthetic prototype norm")
      ->capture_default_str();
  trainc->add_option("--train-per-type", ta.synth.train_per_type,
                     "Synthetic training users per type")
      ->capture_default_str();
  trainc->add_option("--test-per-type", ta.synth.test_per_type,
                     "Synthetic held-out users per type")
      ->capture_default_str();

  // eval
  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "F1 and NDCG of a prediction file");
  evalc->add_option("--pred", ea.pred, "Predictions (JSONL)")->required();
  evalc->add_option("--truth", ea.truth, "Labels (JSONL)")->required();
  evalc->add_option("--out", ea.out, "Write the report as JSON");
  evalc->add_flag("--strict", ea.strict, "Fail on unmatched users");
  evalc->add_flag("--lenient", ea.lenient,
                  "Accept a second <answer> as the closing tag");
  evalc->add_option("--f1-average", ea.average, "macro, micro or weighted")
      ->check(CLI::IsMember({"macro", "micro", "weighted"}))
      ->capture_default_str();
  evalc->add_option("--k", ea.k, "Ranked answers")->capture_default_str();
  evalc->add_option("--epsilon", ea.epsilon, "Dimension weight coefficient")
      ->capture_default_str();

  // serve
  ServiceConfig sc;
  auto* serve = app.add_subcommand("serve", "Run the HTTP reward service");
  serve->add_option("--host", sc.host, "Bind address")->capture_default_str();
  serve->add_option("--port", sc.port, "Port (0 = any free port)")
      ->capture_default_str();
  serve->add_option("--k", sc.k, "Default k")->capture_default_str();
  serve->add_option("--epsilon", sc.epsilon, "Default dimension weight")
      ->capture_default_str();
  serve->add_option("--max-body-bytes", sc.max_body_bytes,
                    "Largest accepted request body")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  // Echo globals and the chosen subcommand's settings.
  {
    const std::string active = app.get_subcommands().front()->get_name() + ".";
    std::istringstream all(app.config_to_str(true, false));
    std::cerr << "# effective config\n";
    for (std::string line; std::getline(all, line);) {
      const auto eq = line.find('=');
      const auto dot = line.find('.');
      if (dot == std::string::npos || dot > eq || line.rfind(active, 0) == 0) {
        std::cerr << line << '\n';
      }
    }
  }

  try {
    if (*prepare) return cmd_prepare(pa, g);
    if (*score) return cmd_score(sa, g);
    if (*trainc) return cmd_train(ta, g);
    if (*evalc) return cmd_eval(ea, g);
    if (*serve) return cmd_serve(sc, g);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
