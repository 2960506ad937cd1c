#include "mbtirank/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "mbtirank/completion.hpp"
#include "mbtirank/error.hpp"
#include "mbtirank/random.hpp"
#include "mbtirank/text.hpp"

namespace mbtirank {

using json = nlohmann::json;

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kFileNotFound,
                "cannot open '" + path.string() + "'");
  }
  return in;
}

std::string read_user_id(const json& j, std::size_t line) {
  if (!j.contains("user_id")) throw SchemaError(line, "missing user_id");
  const json& id = j["user_id"];
  if (id.is_string()) return id.get<std::string>();
  if (id.is_number_integer()) return std::to_string(id.get<long long>());
  throw SchemaError(line, "user_id must be a string or integer");
}

json parse_line(const std::string& line, std::size_t lineno) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw SchemaError(lineno, "not a JSON object");
  }
  return j;
}

bool blank(const std::string& line) { return text::trim(line).empty(); }

}  // namespace

void PipelineConfig::validate() const {
  if (max_posts_per_user < 1 || max_tokens_per_post < 1) {
    throw Error(ErrorCode::kConfigInvalid, "truncation limits must be >= 1");
  }
  if (k < 1 || k > kTypeCount) {
    throw Error(ErrorCode::kConfigInvalid, "k must be in [1, 16]");
  }
  for (const auto& span : text::token_spans(mask_token)) {
    if (is_label_token(std::string_view(mask_token).substr(
                           span.begin, span.end - span.begin),
                       true)) {
      throw Error(ErrorCode::kConfigInvalid,
                  "mask token must not itself be a type code");
    }
  }
}

std::vector<UserRecord> read_records(std::istream& in) {
  std::vector<UserRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const json j = parse_line(line, lineno);
    UserRecord r;
    r.user_id = read_user_id(j, lineno);
    if (!j.contains("posts") || !j["posts"].is_array()) {
      throw SchemaError(lineno, "posts must be an array of strings");
    }
    for (const json& p : j["posts"]) {
      if (!p.is_string()) {
        throw SchemaError(lineno, "posts must be an array of strings");
      }
      r.posts.push_back(p.get<std::string>());
    }
    if (r.posts.empty()) throw SchemaError(lineno, "posts is empty");
    if (!j.contains("label") || !j["label"].is_string()) {
      throw SchemaError(lineno, "missing label");
    }
    auto label = MbtiType::try_parse(j["label"].get<std::string>());
    if (!label) throw SchemaError(lineno, "InvalidType");
    r.label = *label;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<UserRecord> ingest(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_records(in);
}

void write_records(std::ostream& out, const std::vector<UserRecord>& records) {
  for (const UserRecord& r : records) {
    json j;
    j["user_id"] = r.user_id;
    j["posts"] = r.posts;
    j["label"] = r.label.code();
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

namespace {

// RFC 4180 rows: quoted fields may hold commas, doubled quotes and newlines.
bool read_csv_row(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

std::vector<UserRecord> read_kaggle_csv(std::istream& in) {
  std::vector<std::string> fields;
  if (!read_csv_row(in, fields)) return {};
  int type_col = -1;
  int posts_col = -1;
  for (int i = 0; i < static_cast<int>(fields.size()); ++i) {
    const std::string_view name = text::trim(fields[i]);
    if (name == "type") type_col = i;
    if (name == "posts") posts_col = i;
  }
  if (type_col < 0 || posts_col < 0) {
    throw SchemaError(1, "header must contain 'type' and 'posts'");
  }

  std::vector<UserRecord> out;
  std::size_t row = 0;
  std::size_t lineno = 1;
  while (read_csv_row(in, fields)) {
    ++lineno;
    if (fields.size() == 1 && blank(fields[0])) continue;
    ++row;
    const auto needed = static_cast<std::size_t>(std::max(type_col, posts_col));
    if (fields.size() <= needed) throw SchemaError(lineno, "missing column");
    auto label = MbtiType::try_parse(fields[type_col]);
    if (!label) throw SchemaError(lineno, "InvalidType");
    UserRecord r;
    r.user_id = "row-" + std::to_string(row);
    r.label = *label;
    const std::string& joined = fields[posts_col];
    std::size_t start = 0;
    while (true) {
      const std::size_t sep = joined.find("|||", start);
      const std::string_view post = text::trim(std::string_view(joined).substr(
          start, sep == std::string::npos ? std::string::npos : sep - start));
      if (!post.empty()) r.posts.emplace_back(post);
      if (sep == std::string::npos) break;
      start = sep + 3;
    }
    if (r.posts.empty()) throw SchemaError(lineno, "posts is empty");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<UserRecord> convert_kaggle_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_kaggle_csv(in);
}

bool is_label_token(std::string_view token, bool wildcards) {
  if (token.size() != kDimensions) return false;
  bool wildcard_used = false;
  for (int p = 0; p < kDimensions; ++p) {
    const char c = text::to_upper(token[p]);
    if (c == kAlphabet[p][0] || c == kAlphabet[p][1]) continue;
    if (wildcards && c == 'X') {
      wildcard_used = true;
      continue;
    }
    return false;
  }
  return !wildcard_used || wildcards;
}

std::string mask_text(std::string_view input, const PipelineConfig& cfg) {
  std::string out;
  out.reserve(input.size());
  std::size_t copied = 0;
  for (const auto& span : text::token_spans(input)) {
    const std::string_view token =
        input.substr(span.begin, span.end - span.begin);
    if (!is_label_token(token, cfg.mask_wildcards)) continue;
    out.append(input.substr(copied, span.begin - copied));
    if (cfg.mask_mode == MaskMode::kReplace) {
      out += cfg.mask_token;
      copied = span.end;
    } else {
      std::size_t next = span.end;
      while (next < input.size() && text::is_space(input[next])) ++next;
      copied = next;
    }
  }
  out.append(input.substr(copied));
  return out;
}

UserRecord mask_labels(const UserRecord& record, const PipelineConfig& cfg) {
  UserRecord r = record;
  for (std::string& post : r.posts) post = mask_text(post, cfg);
  r.masked = true;
  return r;
}

UserRecord truncate(const UserRecord& record, const PipelineConfig& cfg) {
  UserRecord r = record;
  if (r.posts.size() > static_cast<std::size_t>(cfg.max_posts_per_user)) {
    r.posts.resize(cfg.max_posts_per_user);
  }
  for (std::string& post : r.posts) {
    const auto spans = text::token_spans(post);
    if (spans.size() > static_cast<std::size_t>(cfg.max_tokens_per_post)) {
      post.resize(spans[cfg.max_tokens_per_post - 1].end);
    }
  }
  r.truncated = true;
  return r;
}

const char* to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kParseError: return "ParseError";
    case RejectReason::kTruthAbsent: return "TruthAbsent";
    case RejectReason::kUnknownUser: return "UnknownUser";
  }
  return "Unknown";
}

std::string build_prompt(const UserRecord& record) {
  std::string p =
      "Rank the MBTI personality types most likely to match the author of "
      "the following posts. Reason inside <think></think>, then give the "
      "ranked list inside <answer>[TYPE, ...]</answer>.\n\nPosts:\n";
  for (const std::string& post : record.posts) {
    p += "- ";
    p += post;
    p += '\n';
  }
  return p;
}

FilterResult rejection_filter(const std::vector<TeacherSample>& teacher,
                              const std::map<std::string, UserRecord>& records,
                              const PipelineConfig& cfg) {
  FilterResult out;
  for (const TeacherSample& s : teacher) {
    const auto it = records.find(s.user_id);
    if (it == records.end()) {
      out.rejected.push_back({s.user_id, RejectReason::kUnknownUser, {}});
      continue;
    }
    auto outcome = try_parse_completion(s.completion, cfg.k);
    if (auto* failure = std::get_if<ParseFailure>(&outcome)) {
      out.rejected.push_back(
          {s.user_id, RejectReason::kParseError, failure->describe()});
      continue;
    }
    const auto& parsed = std::get<ParsedCompletion>(outcome);
    if (!parsed.answers.contains(it->second.label)) {
      out.rejected.push_back({s.user_id, RejectReason::kTruthAbsent,
                              it->second.label.code()});
      continue;
    }
    out.kept.push_back({s.user_id, build_prompt(it->second),
                        format_sft_target(parsed.think, parsed.answers)});
  }
  return out;
}

std::vector<SftSample> select_kept(const std::vector<SftSample>& kept,
                                   std::size_t max_kept, std::uint64_t seed) {
  if (kept.size() <= max_kept) return kept;
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5e1ec7));
  // Fisher-Yates with uniform01 keeps the draw portable across libraries.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * (i + 1));
    std::swap(order[i], order[j]);
  }
  order.resize(max_kept);
  std::sort(order.begin(), order.end());
  std::vector<SftSample> out;
  out.reserve(max_kept);
  for (std::size_t i : order) out.push_back(kept[i]);
  return out;
}

std::vector<TeacherSample> read_teacher(std::istream& in) {
  std::vector<TeacherSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const json j = parse_line(line, lineno);
    TeacherSample s;
    s.user_id = read_user_id(j, lineno);
    if (!j.contains("completion") || !j["completion"].is_string()) {
      throw SchemaError(lineno, "missing completion");
    }
    s.completion = j["completion"].get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TeacherSample> read_teacher(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_teacher(in);
}

Split split_sft_rl(const std::vector<UserRecord>& records,
                   const std::set<std::string>& sft_user_ids) {
  std::set<std::string> known;
  for (const UserRecord& r : records) known.insert(r.user_id);
  for (const std::string& id : sft_user_ids) {
    if (!known.count(id)) {
      throw Error(ErrorCode::kUnknownUserId, "unknown user id '" + id + "'");
    }
  }
  Split out;
  for (const UserRecord& r : records) {
    (sft_user_ids.count(r.user_id) ? out.sft : out.rl).push_back(r);
  }
  return out;
}

void write_sft(std::ostream& out, const std::vector<SftSample>& samples) {
  for (const SftSample& s : samples) {
    json j;
    j["user_id"] = s.user_id;
    j["prompt"] = s.prompt;
    j["completion"] = s.completion;
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

void write_rejections(std::ostream& out,
                      const std::vector<Rejection>& rejections) {
  for (const Rejection& r : rejections) {
    json j;
    j["user_id"] = r.user_id;
    j["reason"] = to_string(r.reason);
    if (!r.detail.empty()) j["detail"] = r.detail;
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

}  // namespace mbtirank
