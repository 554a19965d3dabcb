#pragma once

#include <iosfwd>
#include <string>

#include "deepbow/model.hpp"

namespace deepbow {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// "DBOWCKPT", u32 version, u64 header length, JSON header (config, vocabulary
/// identity, tensor table), then every tensor as little-endian doubles in
/// row-major order.
void write_checkpoint(std::ostream& out, const DeepBowModel& model);
DeepBowModel read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const DeepBowModel& model);
DeepBowModel load_checkpoint(const std::string& path);

/// MD5 of the serialized checkpoint; identical models hash identically.
std::string model_hash(const DeepBowModel& model);

}  // namespace deepbow
