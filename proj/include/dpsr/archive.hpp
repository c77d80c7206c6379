#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <torch/torch.h>

namespace dpsr {

// Archive of named arrays used for backbone weights, LPIPS weights and
// training checkpoints.
//
// Layout (all integers little-endian):
//
//   magic     8 bytes   "DPSRARC" followed by 0x01
//   count     u32       number of entries
//   entry * count:
//     name_len  u32, then name_len bytes of UTF-8
//     dtype     u8      1=float32 2=float64 3=int64 4=uint8
//     ndim      u8, then ndim * i64 dims
//     crc32     u32     zlib CRC-32 of the payload
//     payload   prod(dims) * sizeof(dtype) bytes, row-major
//
// Text entries (configuration metadata) are stored as 1-D uint8 arrays.
class Archive {
 public:
  void put(const std::string& name, const torch::Tensor& tensor);
  void put_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const;
  // Throws LoadError if the entry is missing.
  const torch::Tensor& tensor(const std::string& name) const;
  std::optional<std::string> text(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, torch::Tensor> entries_;
};

// Copies every named parameter and buffer of `module` into `archive` under
// `prefix`.
void store_module(Archive& archive, const torch::nn::Module& module, const std::string& prefix = "");

// Copies archive entries into the parameters and buffers of `module`.
// Every parameter must be present with a matching shape; the first
// offending name is reported in the LoadError. Buffers listed in
// `optional_buffers` (matched by suffix) may be absent.
void restore_module(const Archive& archive, torch::nn::Module& module, const std::string& prefix = "",
                    const std::vector<std::string>& optional_buffers = {"num_batches_tracked"});

}  // namespace dpsr
