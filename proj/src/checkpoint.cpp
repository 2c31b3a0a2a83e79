#include "lrpabn/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "lrpabn/binary_io.hpp"
#include "lrpabn/errors.hpp"

namespace lrpabn {

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  ByteWriter w;
  w.bytes("LRPC");
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    if (p.name.size() > 0xFFFF) throw FormatError("parameter name too long: " + p.name);
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect_magic("LRPC");
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at offset 4");
  }
  const std::uint32_t count = r.u32();
  ModelParams params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    std::string name = r.string(r.u16());
    const std::uint8_t rank = r.u8();
    if (rank == 0) throw FormatError("checkpoint: parameter " + name + " has rank 0 at offset " + std::to_string(at));
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw FormatError("checkpoint: zero extent in " + name + " at offset " + std::to_string(r.offset() - 4));
    }
    Tensor value(shape);
    for (double& v : value.data()) v = r.f32();
    if (params.contains(name)) throw FormatError("checkpoint: duplicate parameter " + name + " at offset " + std::to_string(at));
    params.add(std::move(name), std::move(value));
  }
  if (r.offset() != bytes.size()) {
    throw FormatError("checkpoint: " + std::to_string(bytes.size() - r.offset()) + " trailing bytes at offset " +
                      std::to_string(r.offset()));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  write_file(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void round_to_checkpoint_precision(ModelParams& params) {
  for (Parameter& p : params) {
    for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace lrpabn
