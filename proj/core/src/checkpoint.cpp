#include "vdls/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace vdls {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<size_t>(in.gcount()) == sizeof(T);
}

[[noreturn]] void truncated(const std::string& what) {
  throw std::runtime_error("checkpoint truncated while reading " + what);
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<TensorRecord>& records) {
  out.write(kCheckpointMagic, 4);
  put<uint32_t>(out, kCheckpointVersion);
  for (const auto& r : records) {
    if (static_cast<int64_t>(r.values.size()) != (r.shape.empty() ? 1 : shape_numel(r.shape))) {
      throw std::invalid_argument("checkpoint record '" + r.name + "' has inconsistent value count");
    }
    put<uint32_t>(out, static_cast<uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put<uint32_t>(out, static_cast<uint32_t>(r.shape.size()));
    for (int64_t e : r.shape) put<uint64_t>(out, static_cast<uint64_t>(e));
    out.write(reinterpret_cast<const char*>(r.values.data()),
              static_cast<std::streamsize>(r.values.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

std::vector<TensorRecord> read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("not a VDLS checkpoint (bad magic)");
  }
  uint32_t version = 0;
  if (!get(in, version)) truncated("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<TensorRecord> records;
  while (true) {
    uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.gcount() == 0) break;
    if (in.gcount() != sizeof(name_len)) truncated("record header");
    TensorRecord r;
    r.name.resize(name_len);
    in.read(r.name.data(), name_len);
    if (static_cast<uint32_t>(in.gcount()) != name_len) truncated("record name");
    uint32_t rank = 0;
    if (!get(in, rank)) truncated("rank of " + r.name);
    uint64_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint64_t e = 0;
      if (!get(in, e)) truncated("extents of " + r.name);
      r.shape.push_back(static_cast<int64_t>(e));
      count *= e;
    }
    r.values.resize(count);
    in.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<uint64_t>(in.gcount()) != count * sizeof(float)) truncated("values of " + r.name);
    records.push_back(std::move(r));
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, records);
}

std::vector<TensorRecord> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string checkpoint_digest(const std::vector<TensorRecord>& records) {
  std::ostringstream buf;
  write_checkpoint(buf, records);
  return fnv1a_hex(buf.str());
}

std::string fnv1a_hex(std::string_view bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

std::filesystem::path artifact_path(const std::filesystem::path& stem, const char* ext) {
  if (stem.extension() == ".vdls" || stem.extension() == ".json") return std::filesystem::path(stem).replace_extension(ext);
  return std::filesystem::path(stem.string() + ext);
}

}  // namespace vdls
