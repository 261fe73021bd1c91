#pragma once

#include <map>
#include <span>
#include <vector>

#include "mcre/corpus.hpp"
#include "mcre/parsing.hpp"
#include "mcre/rng.hpp"

namespace mcre {

struct FeatureSet;
struct FeatureRecord;

/// Uniform model index in [0, M).
std::size_t random_select(std::size_t num_models, Rng& rng);

/// Rounds half away from zero; letters pass through.
AnswerValue voting_key(const AnswerValue& value);

struct VoteOutcome {
  AnswerValue winner;              // InvalidAnswer when every vote was invalid
  std::vector<AnswerValue> tied;   // candidates sharing the top count, first-seen order
  double share = 0.0;              // winner votes / all votes cast (valid or not)
};

/// Plurality over valid votes after `voting_key`; ties broken uniformly with `rng`.
VoteOutcome plurality_vote(std::span<const AnswerValue> votes, Rng& rng);

/// Majority vote over one question's answers.
VoteOutcome majority_vote(std::span<const AnswerValue> answers, Rng& rng);

/// Per-dataset argmax of training accuracy, ties to the lower index.
std::map<Dataset, std::size_t> best_single_model(const FeatureSet& set, std::span<const std::size_t> train);

/// Plurality over the reference model's recorded samples.
VoteOutcome self_consistency(const FeatureRecord& record, std::size_t reference, Rng& rng);

}  // namespace mcre
