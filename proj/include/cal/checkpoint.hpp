#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "cal/optim.hpp"

namespace cal {

/// Flat archive of named fp64 tensors.
///
/// Layout (all integers little-endian):
///   magic "CALCKPT1" | u64 entry count | entries...
///   entry = u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
void save_checkpoint(const std::filesystem::path& path, const ParameterList& params);

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path);

/// Copies archived values into `params` by name. Every parameter must be
/// present with a matching shape.
void load_checkpoint(const std::filesystem::path& path, const ParameterList& params);

}  // namespace cal
