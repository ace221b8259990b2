#include "impsy/dataset.hpp"

#include "bytes.hpp"

namespace impsy {

namespace {

constexpr char kMagic[5] = "IMPD";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::size_t Dataset::frame_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.frames.size();
  return n;
}

Dataset Dataset::filtered(Source source) const {
  Dataset out;
  out.dimension = dimension;
  for (const auto& seq : sequences) {
    Sequence kept;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      if (seq.sources[i] != source) continue;
      kept.frames.push_back(seq.frames[i]);
      kept.sources.push_back(source);
    }
    if (!kept.frames.empty()) out.sequences.push_back(std::move(kept));
  }
  return out;
}

std::vector<std::uint8_t> pack_dataset(const Dataset& dataset) {
  detail::ByteWriter out;
  out.tag(kMagic);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(dataset.dimension));
  out.u32(static_cast<std::uint32_t>(dataset.sequences.size()));
  for (const auto& seq : dataset.sequences) out.u64(seq.frames.size());
  for (const auto& seq : dataset.sequences) {
    for (const auto& frame : seq.frames) {
      if (frame.dimension() != dataset.dimension) {
        throw DatasetError("frame dimension does not match dataset dimension");
      }
      out.f64(frame.dt);
      for (double v : frame.values) out.f64(v);
    }
  }
  for (const auto& seq : dataset.sequences) {
    for (Source s : seq.sources) out.u8(s == Source::human ? 0 : 1);
  }
  out.crc();
  return out.take();
}

Dataset unpack_dataset(std::span<const std::uint8_t> bytes) {
  if (!detail::crc_matches(bytes)) throw DatasetError("dataset checksum error");
  try {
    detail::ByteReader in(bytes.first(bytes.size() - 4));
    if (!in.tag(kMagic)) throw DatasetError("not a dataset file (bad magic)");
    if (in.u32() != kVersion) throw DatasetError("unsupported dataset version");
    Dataset dataset;
    dataset.dimension = static_cast<int>(in.u32());
    if (dataset.dimension < 1) throw DatasetError("dataset dimension must be >= 1");
    const std::uint32_t count = in.u32();
    std::vector<std::uint64_t> lengths;
    std::uint64_t total = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
      lengths.push_back(in.u64());
      total += lengths.back();
    }
    const std::uint64_t width = static_cast<std::uint64_t>(dataset.dimension) + 1;
    if (in.remaining() != total * width * 8 + total) throw DatasetError("dataset size mismatch");
    for (auto n : lengths) {
      Sequence seq;
      for (std::uint64_t i = 0; i < n; ++i) {
        ContinuousFrame f;
        f.dt = in.f64();
        f.values.resize(static_cast<std::size_t>(dataset.dimension));
        for (double& v : f.values) v = in.f64();
        seq.frames.push_back(std::move(f));
      }
      dataset.sequences.push_back(std::move(seq));
    }
    for (auto& seq : dataset.sequences) {
      for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        seq.sources.push_back(in.u8() == 0 ? Source::human : Source::ai);
      }
    }
    return dataset;
  } catch (const std::out_of_range&) {
    throw DatasetError("dataset truncated");
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  detail::write_file(path, pack_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return unpack_dataset(detail::read_file(path));
}

}  // namespace impsy
