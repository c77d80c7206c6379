#include "dpsr/archive.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "dpsr/errors.hpp"

namespace dpsr {
namespace {

constexpr std::array<char, 8> kMagic = {'D', 'P', 'S', 'R', 'A', 'R', 'C', '\x01'};

std::uint8_t dtype_code(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32: return 1;
    case torch::kFloat64: return 2;
    case torch::kInt64: return 3;
    case torch::kUInt8: return 4;
    default:
      throw ValidationError(std::string("archive: unsupported dtype ") + c10::toString(type));
  }
}

torch::ScalarType dtype_from_code(std::uint8_t code) {
  switch (code) {
    case 1: return torch::kFloat32;
    case 2: return torch::kFloat64;
    case 3: return torch::kInt64;
    case 4: return torch::kUInt8;
    default: throw LoadError("archive: unknown dtype code " + std::to_string(code));
  }
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw LoadError("archive: truncated file " + path.string());
  return value;
}

bool has_suffix(const std::string& name, const std::string& suffix) {
  return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void Archive::put(const std::string& name, const torch::Tensor& tensor) {
  dtype_code(tensor.scalar_type());
  auto copy = tensor.detach().to(torch::kCPU).contiguous().clone();
  if (entries_.find(name) == entries_.end()) names_.push_back(name);
  entries_[name] = std::move(copy);
}

void Archive::put_text(const std::string& name, const std::string& text) {
  auto bytes = torch::empty({static_cast<int64_t>(text.size())}, torch::kUInt8);
  std::memcpy(bytes.data_ptr<std::uint8_t>(), text.data(), text.size());
  put(name, bytes);
}

bool Archive::contains(const std::string& name) const { return entries_.count(name) != 0; }

const torch::Tensor& Archive::tensor(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LoadError("archive: missing entry '" + name + "'");
  return it->second;
}

std::optional<std::string> Archive::text(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) return std::nullopt;
  const auto& bytes = it->second;
  if (bytes.scalar_type() != torch::kUInt8) throw LoadError("archive: entry '" + name + "' is not text");
  return std::string(reinterpret_cast<const char*>(bytes.data_ptr<std::uint8_t>()), bytes.numel());
}

void Archive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("archive: cannot open " + tmp.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(names_.size()));
    for (const auto& name : names_) {
      const auto& t = entries_.at(name);
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod<std::uint8_t>(out, dtype_code(t.scalar_type()));
      write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.dim()));
      for (auto d : t.sizes()) write_pod<std::int64_t>(out, d);
      const auto nbytes = t.numel() * static_cast<int64_t>(t.element_size());
      const auto* data = static_cast<const Bytef*>(t.data_ptr());
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(crc32(0L, data, static_cast<uInt>(nbytes))));
      out.write(reinterpret_cast<const char*>(data), nbytes);
    }
    if (!out) throw Error("archive: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("archive: cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw LoadError("archive: bad magic in " + path.string());

  Archive archive;
  const auto count = read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    if (name_len > (1u << 16)) throw LoadError("archive: implausible name length in " + path.string());
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = dtype_from_code(read_pod<std::uint8_t>(in, path));
    const auto ndim = read_pod<std::uint8_t>(in, path);
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) {
      d = read_pod<std::int64_t>(in, path);
      if (d < 0) throw LoadError("archive: negative dimension for '" + name + "'");
    }
    const auto expected_crc = read_pod<std::uint32_t>(in, path);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    const auto nbytes = t.numel() * static_cast<int64_t>(t.element_size());
    in.read(static_cast<char*>(t.data_ptr()), nbytes);
    if (!in) throw LoadError("archive: truncated payload for '" + name + "' in " + path.string());
    const auto crc = crc32(0L, static_cast<const Bytef*>(t.data_ptr()), static_cast<uInt>(nbytes));
    if (crc != expected_crc) throw LoadError("archive: checksum mismatch for '" + name + "' in " + path.string());
    archive.names_.push_back(name);
    archive.entries_[name] = std::move(t);
  }
  return archive;
}

void store_module(Archive& archive, const torch::nn::Module& module, const std::string& prefix) {
  for (const auto& item : module.named_parameters(/*recurse=*/true)) archive.put(prefix + item.key(), item.value());
  for (const auto& item : module.named_buffers(/*recurse=*/true)) archive.put(prefix + item.key(), item.value());
}

void restore_module(const Archive& archive, torch::nn::Module& module, const std::string& prefix,
                    const std::vector<std::string>& optional_buffers) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target, bool optional) {
    const auto key = prefix + name;
    if (!archive.contains(key)) {
      if (optional) return;
      throw LoadError("missing parameter '" + key + "'");
    }
    const auto& source = archive.tensor(key);
    if (source.sizes() != target.sizes()) {
      std::ostringstream msg;
      msg << "shape mismatch for parameter '" << key << "': expected " << target.sizes() << ", file has "
          << source.sizes();
      throw LoadError(msg.str());
    }
    target.copy_(source.to(target.scalar_type()));
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value(), false);
  for (auto& item : module.named_buffers(true)) {
    const bool optional = std::any_of(optional_buffers.begin(), optional_buffers.end(),
                                      [&](const std::string& s) { return has_suffix(item.key(), s); });
    assign(item.key(), item.value(), optional);
  }
}

}  // namespace dpsr
