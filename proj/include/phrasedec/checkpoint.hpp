#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "phrasedec/tensor.hpp"

namespace phrasedec {

// Binary tensor container.
// Layout: magic "PHRDEC01", u64 entry count, then per entry:
//   u64 name length, name bytes, u64 rank, u64 extents[rank],
//   f64 payload (row-major). All integers and reals little-endian.
// Round-trips bit-exactly.

void save_container(const std::string& path,
                    const std::vector<std::pair<std::string, const Tensor*>>& entries);

std::map<std::string, Tensor> load_container(const std::string& path);

}  // namespace phrasedec
