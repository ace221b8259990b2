#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "impsy/frame.hpp"

namespace impsy {

/// One uninterrupted recording (a log session). dt of the first frame is 0.
struct Sequence {
  std::vector<ContinuousFrame> frames;
  std::vector<Source> sources;  // parallel to frames

  bool operator==(const Sequence&) const = default;
};

struct Dataset {
  int dimension = 1;
  std::vector<Sequence> sequences;

  std::size_t frame_count() const;
  /// Copy containing only frames from the given source; sequence boundaries kept.
  Dataset filtered(Source source) const;

  bool operator==(const Dataset&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Packed file layout (little-endian), see docs/formats.md:
//   "IMPD" | version u32 | D u32 | sequence count u32 | lengths u64[count]
//   | frames f64[(D+1) * total] as [dt, v0..] | sources u8[total] | CRC32 u32
std::vector<std::uint8_t> pack_dataset(const Dataset& dataset);
Dataset unpack_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace impsy
