#include "mcf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>

namespace mcf {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_f32(float v) { put_le(std::bit_cast<std::uint32_t>(v), 4); }
  void put_bytes(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  void put_le(std::uint32_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint32_t get_le(int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }
  std::string get_string(std::size_t n) {
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

std::size_t entry_size(const std::string& name, const Shape& shape) {
  return 2 + name.size() + 1 + 4 * shape.size() + 4 * shape_numel(shape);
}

template <typename T>
void write_entry(ByteWriter& out, const std::string& name, const Shape& shape,
                 std::span<const T> values) {
  if (name.size() > 0xFFFF) throw CheckpointError("parameter name too long: " + name);
  out.put_u16(static_cast<std::uint16_t>(name.size()));
  out.put_bytes(name.data(), name.size());
  out.put_u8(static_cast<std::uint8_t>(shape.size()));
  for (int extent : shape) out.put_u32(static_cast<std::uint32_t>(extent));
  for (T v : values) out.put_f32(static_cast<float>(v));
}

}  // namespace

template <typename T>
std::size_t checkpoint_size(const ParameterSet<T>& set) {
  std::size_t total = 4 + 4 + 4;
  for (const auto& p : set.parameters()) total += entry_size(p.name, p.value.shape());
  for (const auto& b : set.buffers()) {
    total += entry_size(b.name, Shape{static_cast<int>(b.values->size())});
  }
  return total;
}

template <typename T>
void save_checkpoint(const ParameterSet<T>& set, const std::filesystem::path& path) {
  ByteWriter out;
  out.put_bytes(kCheckpointMagic, 4);
  out.put_u32(kCheckpointVersion);
  out.put_u32(static_cast<std::uint32_t>(set.parameters().size() + set.buffers().size()));
  for (const auto& p : set.parameters()) write_entry<T>(out, p.name, p.value.shape(), p.value.data());
  for (const auto& b : set.buffers()) {
    write_entry<T>(out, b.name, Shape{static_cast<int>(b.values->size())},
                   std::span<const T>(*b.values));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  file.write(out.bytes().data(), static_cast<std::streamsize>(out.bytes().size()));
  if (!file) throw CheckpointError("failed writing checkpoint: " + path.string());
}

template <typename T>
void load_checkpoint(ParameterSet<T>& set, const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open checkpoint: " + path.string());
  ByteReader in(std::vector<char>(std::istreambuf_iterator<char>(file), {}));

  if (!in.has(4) || in.get_string(4) != std::string(kCheckpointMagic, 4)) {
    throw BadMagicError("not a checkpoint (bad magic): " + path.string());
  }
  if (!in.has(8)) throw TruncatedEntryError("truncated checkpoint header: " + path.string());
  const std::uint32_t version = in.get_le(4);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion) + ": " + path.string());
  }
  const std::uint32_t count = in.get_le(4);

  struct Target {
    Shape shape;
    std::span<T> dest;
  };
  std::map<std::string, Target> targets;
  for (auto& p : set.parameters()) targets[p.name] = {p.value.shape(), p.value.mutable_data()};
  for (const auto& b : set.buffers()) {
    targets[b.name] = {Shape{static_cast<int>(b.values->size())}, std::span<T>(*b.values)};
  }

  // Decode everything first so a bad file leaves the model untouched.
  std::vector<std::pair<std::span<T>, std::vector<T>>> staged;
  std::set<std::string> seen;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string where = " (entry " + std::to_string(e) + ")";
    if (!in.has(2)) throw TruncatedEntryError("truncated entry name length" + where);
    const std::size_t name_len = in.get_le(2);
    if (!in.has(name_len + 1)) throw TruncatedEntryError("truncated entry name" + where);
    const std::string name = in.get_string(name_len);
    const std::size_t rank = in.get_le(1);
    if (!in.has(4 * rank)) throw TruncatedEntryError("truncated extents of " + name);
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& extent : shape) {
      extent = static_cast<int>(in.get_le(4));
      numel *= static_cast<std::size_t>(extent);
    }
    if (in.remaining() / 4 < numel) throw TruncatedEntryError("truncated values of " + name);
    auto it = targets.find(name);
    if (it == targets.end()) throw UnknownParameterError("unknown parameter in checkpoint: " + name);
    if (it->second.shape != shape) {
      throw EntryShapeError("shape mismatch for " + name + ": file " + shape_to_string(shape) +
                            ", model " + shape_to_string(it->second.shape));
    }
    std::vector<T> values(numel);
    for (auto& v : values) v = static_cast<T>(std::bit_cast<float>(in.get_le(4)));
    seen.insert(name);
    staged.emplace_back(it->second.dest, std::move(values));
  }
  for (const auto& [name, target] : targets) {
    if (!seen.count(name)) throw MissingParameterError("checkpoint lacks parameter: " + name);
  }
  for (auto& [dest, values] : staged) std::copy(values.begin(), values.end(), dest.begin());
}

template std::size_t checkpoint_size(const ParameterSet<float>&);
template std::size_t checkpoint_size(const ParameterSet<double>&);
template void save_checkpoint(const ParameterSet<float>&, const std::filesystem::path&);
template void save_checkpoint(const ParameterSet<double>&, const std::filesystem::path&);
template void load_checkpoint(ParameterSet<float>&, const std::filesystem::path&);
template void load_checkpoint(ParameterSet<double>&, const std::filesystem::path&);

}  // namespace mcf
