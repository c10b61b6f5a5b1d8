#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mcf/layers.hpp"

namespace mcf {

// Binary layout, all integers little-endian:
//   "MCF1" | version u32 | entry count u32 |
//   per entry: name length u16, UTF-8 name, rank u8, rank × u32 extents,
//              numel × f32 (little-endian IEEE-754)
// Entries are the model's parameters followed by its batch-norm buffers.
inline constexpr char kCheckpointMagic[4] = {'M', 'C', 'F', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedEntryError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class UnknownParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class EntryShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class MissingParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Size in bytes of the checkpoint save_checkpoint() would write.
template <typename T>
std::size_t checkpoint_size(const ParameterSet<T>& set);

template <typename T>
void save_checkpoint(const ParameterSet<T>& set, const std::filesystem::path& path);

/// Reads `path` into the tensors referenced by `set`. Every entry must name a
/// known parameter or buffer with matching shape, and every parameter and
/// buffer must be present. Nothing is modified unless the whole file is valid.
template <typename T>
void load_checkpoint(ParameterSet<T>& set, const std::filesystem::path& path);

}  // namespace mcf
