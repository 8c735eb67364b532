#include "interpgaze/io/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace interpgaze {

EyePatch load_image(const std::string& path, int height, int width) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image '" + path + "'");
  // Centre crop to the target aspect ratio, then resize.
  const double target = double(width) / height;
  cv::Rect roi(0, 0, bgr.cols, bgr.rows);
  if (double(bgr.cols) / bgr.rows > target) {
    roi.width = std::max(1, int(std::lround(bgr.rows * target)));
    roi.x = (bgr.cols - roi.width) / 2;
  } else {
    roi.height = std::max(1, int(std::lround(bgr.cols / target)));
    roi.y = (bgr.rows - roi.height) / 2;
  }
  cv::Mat resized;
  cv::resize(bgr(roi), resized, cv::Size(width, height), 0, 0, cv::INTER_AREA);
  EyePatch p(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const auto px = resized.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) p.at(c, y, x) = float(px[2 - c]) / 127.5f - 1.0f;
    }
  return p;
}

void save_png(const EyePatch& img, const std::string& path) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      auto& px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(c, y, x), -1.0f, 1.0f);
        px[2 - c] = static_cast<unsigned char>(std::lround((v + 1.0f) * 127.5f));
      }
    }
  if (!cv::imwrite(path, bgr)) throw IoError("cannot write PNG '" + path + "'");
}

}  // namespace interpgaze
