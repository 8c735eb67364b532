#include "interpgaze/data/columbia.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <regex>

#include "interpgaze/io/image_io.hpp"

namespace interpgaze {

std::optional<AttributeLabel> parse_columbia_name(const std::string& filename) {
  static const std::regex grammar(R"(^([^_/]+)_2m_([+-]?\d+)P_([+-]?\d+)V_([+-]?\d+)H\.(png|jpe?g)$)",
                                  std::regex::icase);
  std::smatch m;
  if (!std::regex_match(filename, m, grammar)) return std::nullopt;
  AttributeLabel a;
  a.subject_id = m[1].str();
  a.pose_deg = std::stod(m[2].str());
  a.pitch_deg = std::stod(m[3].str());
  a.yaw_deg = std::stod(m[4].str());
  return a;
}

LoadReport load_columbia_dir(const std::string& dir, int height, int width) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("not a directory: '" + dir + "'");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());

  LoadReport report;
  for (const auto& name : names) {
    auto label = parse_columbia_name(name);
    if (!label) {
      std::cerr << "warning: skipping unparsable file name '" << name << "'\n";
      ++report.skipped;
      report.skipped_names.push_back(name);
      continue;
    }
    Sample s;
    s.name = fs::path(name).stem().string();
    s.label = *label;
    s.image = load_image((fs::path(dir) / name).string(), height, width);
    report.records.push_back(std::move(s));
  }
  if (report.records.empty())
    throw DataError("no parsable images in '" + dir + "' (" + std::to_string(report.skipped) +
                    " skipped)");
  return report;
}

}  // namespace interpgaze
