#pragma once

#include <string>

#include "mammil/metrics.hpp"

namespace mammil {

// Per-case visualization: for each image, writes the input, the saliency map
// upsampled to image extents (8-bit P5 heat map) and the input with the
// candidate boxes burned in at intensity 1.0, plus a text sidecar listing
// the image attention scores a_m and patch attention scores a_j.
void emit_case_visualization(const CaseModel& model, const CaseRecord& c,
                             const std::string& out_dir);

}  // namespace mammil
