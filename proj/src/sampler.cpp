#include "interpgaze/data/sampler.hpp"

namespace interpgaze {

PairMode parse_pair_mode(const std::string& s) {
  if (s == "train") return PairMode::train;
  if (s == "interp") return PairMode::interp;
  if (s == "redirect") return PairMode::redirect;
  throw ValidationError("unknown pair mode '" + s + "' (train|interp|redirect)");
}

PairSampler::PairSampler(const Dataset& data) : data_(&data) {
  if (data.empty()) throw DataError("pair sampler: empty dataset");
  for (int i = 0; i < int(data.size()); ++i) by_subject_[data[i].label.subject_id].push_back(i);
  for (const auto& [subject, idx] : by_subject_) {
    bool distinct = false;
    for (int i : idx) distinct = distinct || !data[i].label.same_angles(data[idx[0]].label);
    if (distinct) subjects_.push_back(subject);
  }
}

PairSample PairSampler::sample(Rng& rng, PairMode mode) const {
  const Dataset& d = *data_;
  if (mode == PairMode::redirect) {
    const int src = int(rng.below(d.size()));
    std::vector<int> cand;
    for (int j = 0; j < int(d.size()); ++j)
      if (!d[j].label.same_angles(d[src].label)) cand.push_back(j);
    if (cand.empty()) throw DataError("pair sampler: every image has the same attributes");
    return {&d[src], &d[cand[rng.below(cand.size())]]};
  }
  if (subjects_.empty())
    throw DataError("pair sampler: no subject has two images with different attributes");
  const auto& idx = by_subject_.at(subjects_[rng.below(subjects_.size())]);
  const int src = idx[rng.below(idx.size())];
  std::vector<int> cand;
  for (int j : idx)
    if (!d[j].label.same_angles(d[src].label)) cand.push_back(j);
  return {&d[src], &d[cand[rng.below(cand.size())]]};
}

PairSample PairSampler::sample_cross_subject(Rng& rng) const {
  const Dataset& d = *data_;
  if (by_subject_.size() < 2) throw DataError("pair sampler: cross-subject pairs need 2 subjects");
  const int src = int(rng.below(d.size()));
  std::vector<int> cand;
  for (int j = 0; j < int(d.size()); ++j)
    if (d[j].label.subject_id != d[src].label.subject_id && !d[j].label.same_angles(d[src].label))
      cand.push_back(j);
  if (cand.empty()) throw DataError("pair sampler: no cross-subject pair with different attributes");
  return {&d[src], &d[cand[rng.below(cand.size())]]};
}

PairSample sample_pair(const Dataset& data, Rng& rng, PairMode mode) {
  return PairSampler(data).sample(rng, mode);
}

}  // namespace interpgaze
