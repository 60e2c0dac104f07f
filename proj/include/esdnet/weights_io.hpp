#pragma once

#include <string>
#include <vector>

#include "esdnet/tensor.hpp"

// Binary weights container: "ESDW" magic, version, then named f32 tensors,
// closed by a CRC32 of everything before it. Always little-endian. Writes
// go to a temporary file renamed into place on success.

namespace esdnet {

struct NamedTensor {
  std::string name;
  Tensor value;
};

void save_weights(const std::string& path, const std::vector<std::string>& names,
                  const std::vector<Tensor>& values);

// Full decode with CRC and structure validation.
std::vector<NamedTensor> load_weights(const std::string& path);

// Decode and match against an expected parameter set. Missing, extra or
// mis-shaped entries raise errors naming the parameter. values is updated
// only when everything matches.
void load_into(const std::string& path, const std::vector<std::string>& names,
               std::vector<Tensor>& values);

}  // namespace esdnet
