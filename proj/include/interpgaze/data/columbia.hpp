#pragma once

#include <optional>
#include <string>
#include <vector>

#include "interpgaze/data/types.hpp"

namespace interpgaze {

/// Labels parsed from a `{subject}_2m_{P}P_{V}V_{H}H.{ext}` file name.
std::optional<AttributeLabel> parse_columbia_name(const std::string& filename);

struct LoadReport {
  Dataset records;
  int skipped = 0;
  std::vector<std::string> skipped_names;
};

/// Loads every parsable image of `dir` (sorted by file name), centre-cropped
/// to the patch aspect ratio and resized to (height, width). Unparsable
/// names are skipped and counted; an empty result throws DataError.
LoadReport load_columbia_dir(const std::string& dir, int height = 32, int width = 64);

}  // namespace interpgaze
