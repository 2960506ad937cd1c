#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mbtirank/mbti.hpp"

namespace mbtirank {

struct UserRecord {
  std::string user_id;
  std::vector<std::string> posts;
  MbtiType label;
  bool masked = false;
  bool truncated = false;
};

enum class MaskMode {
  /// Swap each matching token for the mask token.
  kReplace,
  /// Drop each matching token together with its trailing whitespace.
  kRemove,
};

struct PipelineConfig {
  int max_posts_per_user = 50;
  int max_tokens_per_post = 128;
  int k = 3;
  std::string mask_token = "<MASK>";
  MaskMode mask_mode = MaskMode::kReplace;
  /// Also mask forum shorthand such as "xNTP" or "ExFJ".
  bool mask_wildcards = false;

  /// Throws Error(kConfigInvalid).
  void validate() const;
};

// ---------------------------------------------------------------------------
// Ingestion
//
// Records are one JSON object per line:
//   {"user_id": "u1", "posts": ["...", "..."], "label": "INTJ"}
// Blank lines are skipped.

/// Throws Error(kFileNotFound) or SchemaError.
std::vector<UserRecord> ingest(const std::filesystem::path& path);
std::vector<UserRecord> read_records(std::istream& in);
void write_records(std::ostream& out, const std::vector<UserRecord>& records);

/// Converts the public CSV dump layout: a `type,posts` header, then one row
/// per user with posts joined by "|||". User ids are "row-<n>", n 1-based.
std::vector<UserRecord> convert_kaggle_csv(const std::filesystem::path& path);
std::vector<UserRecord> read_kaggle_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Preprocessing

/// True for a whitespace-free token equal (case-insensitively) to one of the
/// 16 codes, or, with `wildcards`, to a code with some letters written 'x'.
bool is_label_token(std::string_view token, bool wildcards);

std::string mask_text(std::string_view text, const PipelineConfig& cfg);
UserRecord mask_labels(const UserRecord& record, const PipelineConfig& cfg);

/// Keeps the first max_posts_per_user posts and cuts each post after its
/// max_tokens_per_post-th whitespace token. Kept bytes are unchanged.
UserRecord truncate(const UserRecord& record, const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Rejection sampling of teacher completions

struct TeacherSample {
  std::string user_id;
  std::string completion;
};

struct SftSample {
  std::string user_id;
  std::string prompt;
  std::string completion;
};

enum class RejectReason { kParseError, kTruthAbsent, kUnknownUser };
const char* to_string(RejectReason reason);

struct Rejection {
  std::string user_id;
  RejectReason reason;
  std::string detail;
};

struct FilterResult {
  std::vector<SftSample> kept;
  std::vector<Rejection> rejected;
};

/// Instruction prompt built from a record's posts.
std::string build_prompt(const UserRecord& record);

/// Keeps teacher samples that parse as a k-entry ranked list containing the
/// user's label; kept completions are re-serialized canonically. Every
/// input lands in exactly one of kept / rejected, in input order.
FilterResult rejection_filter(const std::vector<TeacherSample>& teacher,
                              const std::map<std::string, UserRecord>& records,
                              const PipelineConfig& cfg);

/// Seeded subset of at most `max_kept` samples, returned in input order.
std::vector<SftSample> select_kept(const std::vector<SftSample>& kept,
                                   std::size_t max_kept, std::uint64_t seed);

std::vector<TeacherSample> read_teacher(const std::filesystem::path& path);
std::vector<TeacherSample> read_teacher(std::istream& in);

struct Split {
  std::vector<UserRecord> sft;
  std::vector<UserRecord> rl;
};

/// Users named in `sft_user_ids` go to sft, the rest to rl, preserving
/// order. Throws Error(kUnknownUserId) for an id with no record.
Split split_sft_rl(const std::vector<UserRecord>& records,
                   const std::set<std::string>& sft_user_ids);

void write_sft(std::ostream& out, const std::vector<SftSample>& samples);
void write_rejections(std::ostream& out,
                      const std::vector<Rejection>& rejections);

}  // namespace mbtirank
