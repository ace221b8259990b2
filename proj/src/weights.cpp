#include "bytes.hpp"
#include "impsy/mdrnn.hpp"

namespace impsy {

namespace {

constexpr char kMagic[5] = "MDRN";
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

WeightHeader parse_header(detail::ByteReader& in) {
  if (!in.tag(kMagic)) throw WeightFileError("not a weight file (bad magic)");
  WeightHeader header;
  header.version = in.u32();
  if (header.version != kWeightFormatVersion) {
    throw WeightFileError("unsupported weight file version " + std::to_string(header.version) +
                          " (expected " + std::to_string(kWeightFormatVersion) + ")");
  }
  header.shape.dim = static_cast<int>(in.u32());
  header.shape.layers = static_cast<int>(in.u32());
  header.shape.units = static_cast<int>(in.u32());
  header.shape.mixtures = static_cast<int>(in.u32());
  // Bound sizes before allocating anything from an untrusted header.
  if (header.shape.dim < 1 || header.shape.dim > 4096 || header.shape.layers < 1 ||
      header.shape.layers > 64 || header.shape.units < 1 || header.shape.units > 8192 ||
      header.shape.mixtures < 1 || header.shape.mixtures > 16) {
    throw WeightFileError("weight file header has an invalid shape");
  }
  return header;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const MdrnnParams& params) {
  params.check_consistent();
  detail::ByteWriter out;
  out.tag(kMagic);
  out.u32(kWeightFormatVersion);
  out.u32(static_cast<std::uint32_t>(params.shape.dim));
  out.u32(static_cast<std::uint32_t>(params.shape.layers));
  out.u32(static_cast<std::uint32_t>(params.shape.units));
  out.u32(static_cast<std::uint32_t>(params.shape.mixtures));
  for (const auto& tensor : params.tensors()) {
    for (double v : tensor.data) out.f64(v);
  }
  out.crc();
  return out.take();
}

MdrnnParams parse_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + 4) throw WeightFileError("weight file truncated");
  detail::ByteReader in(bytes);
  const WeightHeader header = parse_header(in);
  MdrnnParams params = MdrnnParams::zeros(header.shape);
  const std::size_t expected = kHeaderBytes + params.parameter_count() * 8 + 4;
  if (bytes.size() != expected) {
    throw WeightFileError("weight file checksum error: size " + std::to_string(bytes.size()) +
                          " does not match shape (expected " + std::to_string(expected) + ")");
  }
  if (!detail::crc_matches(bytes)) throw WeightFileError("weight file checksum error: CRC mismatch");
  for (auto& tensor : params.tensors()) {
    for (double& v : tensor.data) v = in.f64();
  }
  if (!params.all_finite()) throw WeightFileError("weight file contains non-finite values");
  return params;
}

void save_weights(const MdrnnParams& params, const std::filesystem::path& path) {
  detail::write_file(path, serialize_weights(params));
}

MdrnnParams load_weights(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw WeightFileError("model file not found: " + path.string());
  return parse_weights(detail::read_file(path));
}

WeightHeader read_weight_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError("cannot open model file " + path.string());
  std::vector<std::uint8_t> head(kHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  if (in.gcount() != static_cast<std::streamsize>(head.size())) {
    throw WeightFileError("weight file truncated");
  }
  detail::ByteReader reader(head);
  return parse_header(reader);
}

}  // namespace impsy
