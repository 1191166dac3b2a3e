#pragma once

#include <string>
#include <vector>

#include "mammil/tensor.hpp"

namespace mammil {

// One trainable weight. Names are unique across a model; component ids key
// into the snapshot machinery used by dynamic training.
struct Parameter {
    std::string name;
    std::string component;
    Tensor tensor;  // requires_grad == true
};

// Flat binary container: per parameter, UTF-8 name and component id
// (u64 length + bytes each), shape as 64-bit little-endian extents, then the
// values as IEEE-754 little-endian doubles. A plain-text "<path>.idx" lists
// the names in order. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const std::vector<Parameter>& params);
std::vector<Parameter> load_checkpoint(const std::string& path);

}  // namespace mammil
