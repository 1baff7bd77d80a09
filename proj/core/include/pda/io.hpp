#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pda/align.hpp"
#include "pda/simgen.hpp"
#include "pda/types.hpp"

namespace pda {

// All binary artifacts are little-endian with f32 payloads.
//
// Memory file ("PDAM", version 1):
//   magic[4], version u32, C u32, K u32, D u32, frozen u8, 3 zero bytes,
//   then C*K*D f32 in class-major/slot/dim order.
//
// Params file ("PDAP", version 1):
//   magic[4], version u32, D u32, W (D*D f32 row-major), lambda f32,
//   bg_bias f32, tau f32, aligner-present u8, and when present:
//   C_feat u32, D u32, H u32, W u32, weight ((C_feat+D)*2*H*W f32 row-major).

void save_memory(const PrototypeMemory& memory, const std::filesystem::path& path);
PrototypeMemory load_memory(const std::filesystem::path& path);

void save_params(const PdaParams& params, const AlignerParams* aligner,
                 const std::filesystem::path& path);

struct LoadedParams {
  PdaParams params;  // fusion/momentum/flags keep their defaults
  std::optional<AlignerParams> aligner;
};
LoadedParams load_params(const std::filesystem::path& path);

// Episode directory: support.bin ("PDAS"), query.bin ("PDAQ"), modes.bin
// ("PDAG"). The run manifest is written by the CLI, not here.
void save_episode(const Episode& episode, const EpisodeConfig& config,
                  const std::filesystem::path& dir);
Episode load_episode(const std::filesystem::path& dir);

// FNV-1a 64-bit, hex-encoded; used for manifests and golden-file checks.
std::string fnv1a_hex(const void* data, std::size_t size);
std::string fnv1a_hex(const std::string& text);
std::string file_hash_hex(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace pda
