#pragma once

#include <map>
#include <string>
#include <vector>

#include "interpgaze/core/rng.hpp"
#include "interpgaze/data/types.hpp"

namespace interpgaze {

/// train / interp: same subject, different angles. redirect: any subject.
enum class PairMode { train, interp, redirect };

PairMode parse_pair_mode(const std::string& s);

/// Pair sampler over a fixed dataset. Holds an index only; the dataset must
/// outlive it. Not thread-safe (one rng stream per consumer).
class PairSampler {
 public:
  explicit PairSampler(const Dataset& data);

  PairSample sample(Rng& rng, PairMode mode) const;

  /// Same as `redirect` but the target is always another subject.
  PairSample sample_cross_subject(Rng& rng) const;

  const Dataset& dataset() const { return *data_; }

 private:
  const Dataset* data_;
  std::vector<std::string> subjects_;                  // subjects with a valid pair
  std::map<std::string, std::vector<int>> by_subject_;
};

/// One pair from `data`; builds a throw-away index.
PairSample sample_pair(const Dataset& data, Rng& rng, PairMode mode);

}  // namespace interpgaze
