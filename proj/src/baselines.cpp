#include "mcre/baselines.hpp"

#include <cmath>

#include "mcre/error.hpp"
#include "mcre/pipeline.hpp"

namespace mcre {

std::size_t random_select(std::size_t num_models, Rng& rng) {
  if (num_models == 0) throw Error("random_select: no models");
  return static_cast<std::size_t>(rng.below(num_models));
}

AnswerValue voting_key(const AnswerValue& value) {
  if (const auto* d = std::get_if<double>(&value)) return std::round(*d);
  return value;
}

VoteOutcome plurality_vote(std::span<const AnswerValue> votes, Rng& rng) {
  std::vector<std::pair<AnswerValue, std::size_t>> tally;
  for (const auto& v : votes) {
    if (!is_valid(v)) continue;
    const auto key = voting_key(v);
    auto it = std::find_if(tally.begin(), tally.end(), [&](const auto& t) { return t.first == key; });
    if (it == tally.end()) {
      tally.emplace_back(key, 1);
    } else {
      ++it->second;
    }
  }
  VoteOutcome out;
  if (tally.empty()) return out;
  std::size_t top = 0;
  for (const auto& t : tally) top = std::max(top, t.second);
  for (const auto& t : tally)
    if (t.second == top) out.tied.push_back(t.first);
  out.winner = out.tied.size() == 1 ? out.tied.front() : out.tied[static_cast<std::size_t>(rng.below(out.tied.size()))];
  out.share = static_cast<double>(top) / static_cast<double>(votes.size());
  return out;
}

VoteOutcome majority_vote(std::span<const AnswerValue> answers, Rng& rng) { return plurality_vote(answers, rng); }

std::map<Dataset, std::size_t> best_single_model(const FeatureSet& set, std::span<const std::size_t> train) {
  std::map<Dataset, std::vector<double>> correct;
  for (const auto r : train) {
    const auto& rec = set.records[r];
    auto& c = correct[rec.question.dataset];
    c.resize(set.num_models(), 0.0);
    for (std::size_t m = 0; m < set.num_models(); ++m) c[m] += rec.correctness[m];
  }
  std::map<Dataset, std::size_t> out;
  for (const auto& [dataset, c] : correct) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < c.size(); ++m)
      if (c[m] > c[best]) best = m;
    out[dataset] = best;
  }
  return out;
}

VoteOutcome self_consistency(const FeatureRecord& record, std::size_t reference, Rng& rng) {
  const auto it = record.samples.find(reference);
  if (it == record.samples.end() || it->second.size() < 2)
    throw Error("self-consistency samples unavailable for " + record.question.question_id);
  return plurality_vote(it->second, rng);
}

}  // namespace mcre
