#pragma once

#include <string>

#include "interpgaze/data/types.hpp"

namespace interpgaze {

/// Reads a PNG/JPEG, centre-crops to the target aspect and resizes.
EyePatch load_image(const std::string& path, int height, int width);

/// Writes an 8-bit RGB PNG.
void save_png(const EyePatch& img, const std::string& path);

}  // namespace interpgaze
