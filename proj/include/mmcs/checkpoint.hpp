#pragma once

#include <string>

#include "mmcs/model.hpp"

namespace mmcs {

// Binary checkpoint layout (all integers little-endian):
//   magic "MMCS1" (5 bytes)
//   u32 config length, then the config as canonical JSON (sorted keys, compact)
//   u32 parameter count
//   per parameter: u16 name length, UTF-8 name, u8 rank, u32 dims,
//                  payload as IEEE-754 binary64 little-endian
// The loader rebuilds the expected registry from the config and rejects any
// name or shape that does not match it.

struct LoadedCheckpoint {
    ModelConfig config;
    ParamStore params;
};

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore& params);

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace mmcs
