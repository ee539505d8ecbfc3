#include "ovgt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <zlib.h>

namespace ovgt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'O', 'V', 'G', 'T'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointRecord> records) {
  if (records.size() > std::numeric_limits<std::uint32_t>::max()) throw CheckpointError("too many parameters");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  std::set<std::string> names;
  for (const auto& r : records) {
    if (!names.insert(r.name).second) throw CheckpointError("duplicate parameter name '" + r.name + "'");
    if (r.name.size() > std::numeric_limits<std::uint16_t>::max()) throw CheckpointError("parameter name too long");
    if (r.shape.size() > std::numeric_limits<std::uint8_t>::max()) throw CheckpointError("rank too large");
    if (numel(r.shape) != r.values.size()) throw CheckpointError("record '" + r.name + "' has inconsistent size");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.shape.size()));
    for (std::size_t d : r.shape) {
      if (d > std::numeric_limits<std::uint32_t>::max()) throw CheckpointError("dimension too large");
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    if (r.dtype == DType::kFloat32) {
      for (double v : r.values) put<float>(out, static_cast<float>(v));
    } else {
      for (double v : r.values) put<double>(out, v);
    }
  }
  put<std::uint32_t>(out, crc_of(out));
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterList& params, DType dtype) {
  std::vector<CheckpointRecord> records;
  records.reserve(params.size());
  for (const auto& p : params) {
    const auto v = p.tensor.values();
    records.push_back({p.name, dtype, p.tensor.shape(), std::vector<double>(v.begin(), v.end())});
  }
  return encode_checkpoint(records);
}

std::vector<CheckpointRecord> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 4 + 4) throw CheckpointError("checkpoint too short");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (crc_of(body) != stored) throw CheckpointError("checkpoint CRC mismatch: file is corrupted");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not an OVGT checkpoint");

  Reader in(body.subspan(4));
  const auto version = in.get<std::uint16_t>();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<CheckpointRecord> records;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    r.name = in.get_string(in.get<std::uint16_t>());
    if (!names.insert(r.name).second) throw CheckpointError("duplicate parameter name '" + r.name + "'");
    const auto code = in.get<std::uint8_t>();
    if (code > 1) throw CheckpointError("unknown dtype code " + std::to_string(code) + " for '" + r.name + "'");
    r.dtype = static_cast<DType>(code);
    const auto rank = in.get<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) r.shape.push_back(in.get<std::uint32_t>());
    const std::size_t n = numel(r.shape);
    const std::size_t width = r.dtype == DType::kFloat32 ? 4 : 8;
    if (in.remaining() / width < n) throw CheckpointError("checkpoint truncated in '" + r.name + "'");
    r.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      r.values[k] = r.dtype == DType::kFloat32 ? static_cast<double>(in.get<float>()) : in.get<double>();
    }
    records.push_back(std::move(r));
  }
  if (in.remaining() != 0) throw CheckpointError("trailing bytes after the last record");
  return records;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params, DType dtype) {
  write_bytes(path, encode_checkpoint(params, dtype));
}

std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_bytes(path));
}

void restore_parameters(const ParameterList& params, std::span<const CheckpointRecord> records) {
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw CheckpointError("parameter '" + p.name + "' has shape " + to_string(it->second->shape) +
                            " in the checkpoint but " + to_string(p.tensor.shape()) + " in the model");
    }
    Tensor t = p.tensor;
    const auto dst = t.mutable_values();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) throw CheckpointError("checkpoint has unexpected parameter '" + by_name.begin()->first + "'");
}

}  // namespace ovgt
