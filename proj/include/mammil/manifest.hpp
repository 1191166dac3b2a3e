#pragma once

#include <string>
#include <vector>

#include "mammil/records.hpp"

namespace mammil {

// Manifest: UTF-8 CSV with header
//   case_id,side,view,path,case_label,image_label,roi_boxes
// roi_boxes is a semicolon-separated list of x0:y0:x1:y1:kind:label; the
// image_label and roi_boxes cells may be empty. Image paths are resolved
// relative to the manifest's directory.
std::vector<CaseRecord> load_manifest(const std::string& path);

// Writes manifest_path plus one P5 graymap per image under image_dir
// (relative paths go into the manifest). Existing source_path values are
// ignored; files are named <case_id>_<side>-<view>.pgm.
void write_manifest(const std::vector<CaseRecord>& cases, const std::string& manifest_path,
                    const std::string& image_dir, int maxval = 255);

}  // namespace mammil
