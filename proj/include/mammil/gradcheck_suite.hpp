#pragma once

#include <string>
#include <vector>

#include "mammil/gradcheck.hpp"

namespace mammil {

struct GradCheckEntry {
    std::string path;          // op kind or end-to-end path name
    double max_rel_error = 0.0;
    bool ok = false;           // max_rel_error < threshold
};

// Finite-difference verification of every recorded op kind (20 random inputs
// each, kink ops kept clear of their kinks) and of the full case loss for
// all ten pooling specs on a tiny two-image model with frozen candidate
// boxes. inject_fault adds one deliberately wrong gradient so harness
// failures stay detectable.
std::vector<GradCheckEntry> run_gradcheck_suite(double eps, double threshold,
                                                bool inject_fault = false);

}  // namespace mammil
