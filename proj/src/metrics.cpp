#include "mbtirank/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mbtirank/completion.hpp"
#include "mbtirank/error.hpp"
#include "mbtirank/text.hpp"

namespace mbtirank {

using json = nlohmann::json;

namespace {

struct Counts {
  std::vector<double> tp, fp, fn;
  explicit Counts(int classes) : tp(classes), fp(classes), fn(classes) {}

  void add(std::optional<int> pred, int truth) {
    if (pred && *pred == truth) {
      tp[truth] += 1;
      return;
    }
    fn[truth] += 1;
    if (pred) fp[*pred] += 1;
  }

  double f1(F1Average average) const {
    const std::size_t n = tp.size();
    if (average == F1Average::kMicro) {
      double t = 0, p = 0, f = 0;
      for (std::size_t c = 0; c < n; ++c) {
        t += tp[c];
        p += fp[c];
        f += fn[c];
      }
      const double denom = 2 * t + p + f;
      return denom > 0 ? 2 * t / denom : 0.0;
    }
    double sum = 0.0;
    double weight = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double denom = 2 * tp[c] + fp[c] + fn[c];
      if (denom == 0) continue;  // no support and never predicted
      const double f1 = 2 * tp[c] / denom;
      const double w =
          average == F1Average::kWeighted ? tp[c] + fn[c] : 1.0;
      sum += w * f1;
      weight += w;
    }
    return weight > 0 ? sum / weight : 0.0;
  }
};

template <typename Pred>
void check_sizes(std::span<const Pred> preds,
                 std::span<const MbtiType> truths) {
  if (preds.size() != truths.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "predictions and truths differ in length");
  }
  if (truths.empty()) throw Error(ErrorCode::kEmptyInput, "no samples");
}

std::vector<std::optional<MbtiType>> lift(std::span<const MbtiType> preds) {
  return {preds.begin(), preds.end()};
}

}  // namespace

F1Average parse_f1_average(std::string_view name) {
  if (name == "macro") return F1Average::kMacro;
  if (name == "micro") return F1Average::kMicro;
  if (name == "weighted") return F1Average::kWeighted;
  throw Error(ErrorCode::kConfigInvalid,
              "unknown F1 average '" + std::string(name) + "'");
}

MbtiType point_prediction(const RankedPrediction& pred) {
  if (pred.empty()) {
    throw Error(ErrorCode::kEmptyPrediction, "empty ranked prediction");
  }
  return pred.front();
}

BinaryF1 binary_macro_f1(std::span<const std::optional<MbtiType>> preds,
                         std::span<const MbtiType> truths, F1Average average) {
  check_sizes(preds, truths);
  BinaryF1 out;
  for (int p = 0; p < kDimensions; ++p) {
    Counts counts(2);
    for (std::size_t i = 0; i < truths.size(); ++i) {
      std::optional<int> pred;
      if (preds[i]) pred = preds[i]->pole(p);
      counts.add(pred, truths[i].pole(p));
    }
    out.per_dimension[p] = counts.f1(average);
    out.average += out.per_dimension[p] / kDimensions;
  }
  return out;
}

BinaryF1 binary_macro_f1(std::span<const MbtiType> preds,
                         std::span<const MbtiType> truths, F1Average average) {
  const auto lifted = lift(preds);
  return binary_macro_f1(std::span<const std::optional<MbtiType>>(lifted),
                         truths, average);
}

double multiclass_f1(std::span<const std::optional<MbtiType>> preds,
                     std::span<const MbtiType> truths, F1Average average) {
  check_sizes(preds, truths);
  Counts counts(kTypeCount);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    std::optional<int> pred;
    if (preds[i]) pred = preds[i]->index();
    counts.add(pred, truths[i].index());
  }
  return counts.f1(average);
}

double multiclass_f1(std::span<const MbtiType> preds,
                     std::span<const MbtiType> truths, F1Average average) {
  const auto lifted = lift(preds);
  return multiclass_f1(std::span<const std::optional<MbtiType>>(lifted),
                       truths, average);
}

EvalReport evaluate(std::span<const std::optional<RankedPrediction>> preds,
                    std::span<const MbtiType> truths, const RewardConfig& cfg,
                    F1Average average) {
  check_sizes(preds, truths);
  EvalReport r;
  r.n_samples = truths.size();
  std::vector<std::optional<MbtiType>> points(truths.size());
  double ndcg_sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto& pred = preds[i];
    if (!pred || pred->size() != static_cast<std::size_t>(cfg.k)) {
      ++r.n_invalid;
      continue;
    }
    points[i] = point_prediction(*pred);
    ndcg_sum += ndcg_at_k(*pred, truths[i], cfg);
  }
  const BinaryF1 b = binary_macro_f1(
      std::span<const std::optional<MbtiType>>(points), truths, average);
  r.binary_macro_f1 = b.average;
  r.per_dimension_f1 = b.per_dimension;
  r.multiclass_f1 = multiclass_f1(
      std::span<const std::optional<MbtiType>>(points), truths, average);
  r.ndcg_at_k = ndcg_sum / static_cast<double>(truths.size());
  return r;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kFileNotFound,
                "cannot open '" + path.string() + "'");
  }
  return in;
}

json parse_object(const std::string& line, std::size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw SchemaError(lineno, "not a JSON object");
  }
  return j;
}

std::string user_id_of(const json& j, std::size_t lineno) {
  if (j.contains("user_id")) {
    if (j["user_id"].is_string()) return j["user_id"].get<std::string>();
    if (j["user_id"].is_number_integer()) {
      return std::to_string(j["user_id"].get<long long>());
    }
  }
  throw SchemaError(lineno, "missing user_id");
}

std::optional<RankedPrediction> prediction_of(const json& j,
                                              std::size_t lineno,
                                              const RewardConfig& cfg,
                                              const ParseOptions& parse) {
  if (j.contains("completion")) {
    if (!j["completion"].is_string()) {
      throw SchemaError(lineno, "completion must be a string");
    }
    auto outcome =
        try_parse_completion(j["completion"].get<std::string>(), cfg.k, parse);
    if (auto* ok = std::get_if<ParsedCompletion>(&outcome)) {
      return std::move(ok->answers);
    }
    return std::nullopt;
  }
  if (j.contains("answers")) {
    if (!j["answers"].is_array()) {
      throw SchemaError(lineno, "answers must be an array");
    }
    std::vector<MbtiType> types;
    std::array<bool, kTypeCount> seen{};
    for (const json& a : j["answers"]) {
      if (!a.is_string()) return std::nullopt;
      auto t = MbtiType::try_parse(a.get<std::string>());
      if (!t || seen[t->index()]) return std::nullopt;
      seen[t->index()] = true;
      types.push_back(*t);
    }
    if (types.size() != static_cast<std::size_t>(cfg.k)) return std::nullopt;
    return RankedPrediction(std::move(types));
  }
  throw SchemaError(lineno, "needs 'completion' or 'answers'");
}

}  // namespace

EvalReport evaluate_file(const std::filesystem::path& pred_path,
                         const std::filesystem::path& truth_path,
                         const RewardConfig& cfg,
                         const EvalFileOptions& options) {
  cfg.validate();
  std::vector<std::pair<std::string, MbtiType>> truth_rows;
  {
    auto in = open_input(truth_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const json j = parse_object(line, lineno);
      if (!j.contains("label") || !j["label"].is_string()) {
        throw SchemaError(lineno, "missing label");
      }
      auto label = MbtiType::try_parse(j["label"].get<std::string>());
      if (!label) throw SchemaError(lineno, "InvalidType");
      truth_rows.emplace_back(user_id_of(j, lineno), *label);
    }
  }

  std::map<std::string, std::optional<RankedPrediction>> by_user;
  {
    auto in = open_input(pred_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const json j = parse_object(line, lineno);
      std::string id = user_id_of(j, lineno);
      auto pred = prediction_of(j, lineno, cfg, options.parse);
      if (!by_user.emplace(std::move(id), std::move(pred)).second) {
        throw SchemaError(lineno, "duplicate user_id");
      }
    }
  }

  std::vector<std::optional<RankedPrediction>> preds;
  std::vector<MbtiType> truths;
  std::size_t matched = 0;
  for (const auto& [id, label] : truth_rows) {
    const auto it = by_user.find(id);
    if (it == by_user.end()) {
      if (options.strict) {
        throw Error(ErrorCode::kJoinError, "no prediction for user '" + id + "'");
      }
      preds.emplace_back(std::nullopt);
    } else {
      preds.push_back(it->second);
      ++matched;
    }
    truths.push_back(label);
  }
  if (options.strict && matched != by_user.size()) {
    for (const auto& [id, pred] : by_user) {
      const bool known = std::any_of(
          truth_rows.begin(), truth_rows.end(),
          [&](const auto& row) { return row.first == id; });
      if (!known) {
        throw Error(ErrorCode::kJoinError,
                    "prediction for unknown user '" + id + "'");
      }
    }
  }
  return evaluate(preds, truths, cfg, options.average);
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "samples            " << r.n_samples << '\n'
     << "invalid            " << r.n_invalid << '\n'
     << "binary macro-F1    " << r.binary_macro_f1 << "  (E/I "
     << r.per_dimension_f1[0] << ", S/N " << r.per_dimension_f1[1] << ", T/F "
     << r.per_dimension_f1[2] << ", J/P " << r.per_dimension_f1[3] << ")\n"
     << "multiclass F1      " << r.multiclass_f1 << '\n'
     << "NDCG@k             " << r.ndcg_at_k << '\n';
  return os.str();
}

std::string report_json(const EvalReport& r) {
  json j;
  j["binary_macro_f1"] = r.binary_macro_f1;
  j["per_dimension_f1"] = r.per_dimension_f1;
  j["multiclass_f1"] = r.multiclass_f1;
  j["ndcg_at_k"] = r.ndcg_at_k;
  j["n_samples"] = r.n_samples;
  j["n_invalid"] = r.n_invalid;
  return j.dump();
}

}  // namespace mbtirank
