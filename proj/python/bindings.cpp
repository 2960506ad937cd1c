#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mbtirank/completion.hpp"
#include "mbtirank/error.hpp"
#include "mbtirank/grpo.hpp"
#include "mbtirank/metrics.hpp"
#include "mbtirank/pipeline.hpp"
#include "mbtirank/reward.hpp"
#include "mbtirank/service.hpp"

namespace py = pybind11;
using namespace mbtirank;

namespace {

RewardConfig reward_config(int k, double epsilon) {
  RewardConfig rc;
  rc.k = k;
  rc.dim_weight.epsilon = epsilon;
  rc.validate();
  return rc;
}

RankedPrediction ranked(const std::vector<std::string>& codes) {
  std::vector<MbtiType> v;
  v.reserve(codes.size());
  for (const auto& c : codes) v.push_back(parse_type(c));
  return RankedPrediction(std::move(v));
}

std::vector<std::string> codes_of(const RankedPrediction& p) {
  std::vector<std::string> out;
  for (MbtiType t : p) out.push_back(t.code());
  return out;
}

py::dict breakdown_dict(const RewardBreakdown& r) {
  py::dict d;
  d["valid"] = r.valid;
  d["ndcg"] = r.ndcg;
  d["ds"] = r.ds;
  d["total"] = r.total;
  d["parse_error"] = r.valid ? py::object(py::none()) : py::object(py::str(r.parse_error));
  return d;
}

std::vector<std::optional<MbtiType>> optional_types(
    const std::vector<std::optional<std::string>>& codes) {
  std::vector<std::optional<MbtiType>> out;
  for (const auto& c : codes) {
    if (c) out.emplace_back(parse_type(*c));
    else out.emplace_back(std::nullopt);
  }
  return out;
}

std::vector<MbtiType> types(const std::vector<std::string>& codes) {
  std::vector<MbtiType> out;
  for (const auto& c : codes) out.push_back(parse_type(c));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MBTI ranking rewards, GRPO toy training and evaluation metrics";
  m.attr("__version__") = version();

  static py::exception<Error> error(m, "MbtiError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("all_types", [] {
    std::vector<std::string> out;
    for (MbtiType t : MbtiType::all()) out.push_back(t.code());
    return out;
  }, "The 16 codes in index order.");
  m.def("normalize_type", [](const std::string& s) { return parse_type(s).code(); },
        py::arg("code"));
  m.def("dim_similarity",
        [](const std::string& pred, const std::string& truth, double epsilon) {
          DimWeightConfig c{epsilon};
          c.validate();
          return dim_similarity(parse_type(pred), parse_type(truth), c);
        },
        py::arg("pred"), py::arg("truth"), py::arg("epsilon") = 0.1);

  m.def("dcg_at_k", [](const std::vector<double>& s, int k) { return dcg_at_k(s, k); },
        py::arg("scores"), py::arg("k"));
  m.def("ndcg_at_k",
        [](const std::vector<std::string>& pred, const std::string& truth, int k,
           double epsilon) {
          return ndcg_at_k(ranked(pred), parse_type(truth), reward_config(k, epsilon));
        },
        py::arg("pred"), py::arg("truth"), py::arg("k") = 3, py::arg("epsilon") = 0.1);
  m.def("total_reward",
        [](const std::string& completion, const std::string& truth, int k, double epsilon,
           bool ndcg, bool ds, bool lenient) {
          ParseOptions po;
          po.lenient_closer = lenient;
          return breakdown_dict(total_reward(completion, parse_type(truth),
                                             reward_config(k, epsilon), {ndcg, ds}, po));
        },
        py::arg("completion"), py::arg("truth"), py::arg("k") = 3, py::arg("epsilon") = 0.1,
        py::arg("ndcg") = true, py::arg("ds") = true, py::arg("lenient") = false);

  m.def("parse_completion",
        [](const std::string& text, int k, bool lenient) {
          ParseOptions po;
          po.lenient_closer = lenient;
          auto parsed = parse_completion(text, k, po);
          return py::make_tuple(parsed.think, codes_of(parsed.answers));
        },
        py::arg("text"), py::arg("k") = 3, py::arg("lenient") = false,
        "Returns (think, answers); raises MbtiError on malformed text.");
  m.def("format_sft_target",
        [](const std::string& think, const std::vector<std::string>& answers) {
          return format_sft_target(think, ranked(answers));
        },
        py::arg("think"), py::arg("answers"));

  m.def("group_advantages",
        [](const std::vector<double>& r, double floor) { return group_advantages(r, floor); },
        py::arg("rewards"), py::arg("std_floor") = kDefaultStdFloor);

  m.def("mask_text",
        [](const std::string& s, const std::string& token, bool remove, bool wildcards) {
          PipelineConfig c;
          c.mask_token = token;
          c.mask_mode = remove ? MaskMode::kRemove : MaskMode::kReplace;
          c.mask_wildcards = wildcards;
          c.validate();
          return mask_text(s, c);
        },
        py::arg("text"), py::arg("mask_token") = "<MASK>", py::arg("remove") = false,
        py::arg("wildcards") = false);

  m.def("binary_macro_f1",
        [](const std::vector<std::optional<std::string>>& preds,
           const std::vector<std::string>& truths, const std::string& average) {
          const auto b = binary_macro_f1(optional_types(preds), types(truths),
                                         parse_f1_average(average));
          return py::make_tuple(b.average, b.per_dimension);
        },
        py::arg("preds"), py::arg("truths"), py::arg("average") = "macro",
        "Returns (average, [E/I, S/N, T/F, J/P]); None predictions count as wrong.");
  m.def("multiclass_f1",
        [](const std::vector<std::optional<std::string>>& preds,
           const std::vector<std::string>& truths, const std::string& average) {
          return multiclass_f1(optional_types(preds), types(truths), parse_f1_average(average));
        },
        py::arg("preds"), py::arg("truths"), py::arg("average") = "macro");

  m.def("handle_score",
        [](const std::string& body, int k, double epsilon) {
          ServiceConfig c;
          c.k = k;
          c.epsilon = epsilon;
          const HttpReply r = handle_score(body, c);
          return py::make_tuple(r.status, r.body);
        },
        py::arg("body"), py::arg("k") = 3, py::arg("epsilon") = 0.1,
        "Service scoring handler without the HTTP layer: (status, json body).");

  m.def("train_synthetic",
        [](std::uint64_t seed, int steps, const std::string& heads, int groups_per_step,
           double prototype_scale, bool ndcg, bool ds) {
          SyntheticConfig sc;
          sc.seed = seed;
          sc.prototype_scale = prototype_scale;
          const SyntheticTask task = make_synthetic_task(sc);
          GrpoConfig gc;
          gc.seed = seed;
          gc.steps = steps;
          gc.groups_per_step = groups_per_step;
          TrainOptions opt;
          opt.terms = {ndcg, ds};
          if (heads == "per-position") opt.heads = Heads::kPerPosition;
          else if (heads != "shared") throw Error(ErrorCode::kConfigInvalid, "unknown heads");
          RewardConfig rc;
          TrainResult res;
          {
            py::gil_scoped_release release;
            res = train(task.train, gc, rc, opt);
          }
          py::list log;
          for (const StepLog& s : res.log) {
            py::dict d;
            d["step"] = s.step;
            d["mean_reward"] = s.mean_reward;
            d["mean_ndcg"] = s.mean_ndcg;
            d["mean_ds"] = s.mean_ds;
            d["kl"] = s.kl;
            d["clip_fraction"] = s.clip_fraction;
            log.append(d);
          }
          py::dict out;
          out["log"] = log;
          out["heldout_ndcg"] = mean_ndcg(res.policy, task.test, rc, Decoding::kExpected);
          out["heldout_ndcg_greedy"] = mean_ndcg(res.policy, task.test, rc, Decoding::kGreedy);
          return out;
        },
        py::arg("seed") = 0, py::arg("steps") = 200, py::arg("heads") = "shared",
        py::arg("groups_per_step") = 1, py::arg("prototype_scale") = 1.0,
        py::arg("ndcg") = true, py::arg("ds") = true,
        "GRPO on the synthetic task; returns the step log and held-out NDCG@3.");
}
