#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cmg/networks.hpp"

namespace cmg {

// Flat binary archive of named tensors:
//   "CMGTENS1" | u64 count | per tensor: u32 name length, name bytes,
//   u8 dtype (0 f32, 1 f64, 2 i64), u32 rank, i64 dims[rank], raw data.
// Integers and data are little-endian. The byte stream depends only on the
// names, shapes and values, in the given order.
void write_tensor_archive(const std::filesystem::path& file, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_archive(const std::filesystem::path& file);

// Writes `text` to `file`; throws CheckpointError on failure.
void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);

// Copies archived values into the module parameters named `prefix + name`.
// Missing names or shape mismatches throw IncompatibleCheckpoint.
void load_module_parameters(torch::nn::Module& module, const std::string& prefix,
                            const std::map<std::string, torch::Tensor>& archived);

// Extractor archive: <dir>/manifest.json + <dir>/tensors.bin.
void save_extractor(const std::filesystem::path& dir, FeatureExtractor& f, int64_t resolution,
                    uint64_t seed);
FeatureExtractor load_extractor(const std::filesystem::path& dir);

}  // namespace cmg
