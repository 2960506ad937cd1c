#pragma once

#include <iosfwd>
#include <span>

#include "mbtirank/grpo.hpp"

namespace mbtirank {

/// {"feature_dim", "k", "heads", "theta": [[...16 values] per row]}
void save_policy(std::ostream& out, const ToyPolicy& policy);
/// Throws Error(kParseError) on malformed input.
ToyPolicy load_policy(std::istream& in);

/// One JSON object per step: step, mean_reward, mean_ndcg, mean_ds, kl,
/// clip_fraction.
void write_step_log(std::ostream& out, const StepLog& entry);

}  // namespace mbtirank
