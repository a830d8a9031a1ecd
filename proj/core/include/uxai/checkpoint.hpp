#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uxai/network.hpp"

namespace uxai {

// Binary layout (little-endian):
//   "UXN1"
//   u32 layer count
//   per layer: u8 kind tag, u32 rank, u32 dims[rank], f32 parameters
// rank/dims describe the primary parameter tensor (0 for activation layers);
// parameters follow in declared order (weights then bias; Flipout: mean,
// log-sigma, bias). Hyperparameters are not stored: a checkpoint restores
// into a network of the same architecture.

std::vector<std::uint8_t> encode_checkpoint(const Network& net);

/// Restores parameters into a copy of `architecture`, validating kinds and dims.
Network decode_checkpoint(std::span<const std::uint8_t> bytes, const Network& architecture);

void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path, const Network& architecture);

/// Plain-text ensemble manifest: "architecture <hex hash>" then one member
/// checkpoint path per line (relative paths resolve against the manifest).
struct EnsembleManifest {
  std::uint64_t architecture_hash = 0;
  std::vector<std::filesystem::path> members;
};

void save_ensemble(const std::filesystem::path& manifest_path, const std::vector<Network>& members);
EnsembleManifest read_manifest(const std::filesystem::path& manifest_path);
std::vector<Network> load_ensemble(const std::filesystem::path& manifest_path, const Network& architecture);

/// Writes via a temporary sibling file and rename, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace uxai
