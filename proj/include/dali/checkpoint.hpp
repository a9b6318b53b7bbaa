#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dali/training.hpp"

namespace dali {

/// Binary layout (little-endian): "DCK1", u32 version, then records of
/// u16 name length, UTF-8 name, u8 rank, rank x u32 dims, row-major f64 data.
///
/// Records: {student,teacher}.layer<l>.{weight,bias}, centers,
/// optim.step, optim.first.<i>, optim.second.<i>, meta.step, meta.epoch,
/// meta.config_hash (two u32 halves), meta.use_teacher, meta.leaky_slope.
/// The optimizer hyperparameters belong to the run config and are not stored.
std::string encode_checkpoint(const Checkpoint& ck);
/// Throws ParseError on malformed input or an unsupported version.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dali
