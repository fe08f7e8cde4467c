#include "railwave/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <set>

#include "railwave/binary_io.hpp"
#include "railwave/error.hpp"

namespace railwave {

namespace {

constexpr std::string_view kMagic = "RWCK";
constexpr std::string_view kVelocityPrefix = "optim.velocity.";
constexpr std::string_view kEpochName = "meta.epoch";
constexpr std::string_view kRngName = "meta.rng_state";

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U64 = 2 };

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const auto n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

void put_blob(io::ByteWriter& w, std::string_view name, DType dtype, const Shape& shape, const void* data,
              std::size_t bytes) {
  w.put_string(name);
  w.put_u8(static_cast<std::uint8_t>(dtype));
  w.put_u8(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) w.put_u32(static_cast<std::uint32_t>(d));
  w.put_bytes(data, bytes);
  w.put_u32(crc_of(std::span(static_cast<const std::uint8_t*>(data), bytes)));
}

struct Blob {
  DType dtype;
  Shape shape;
  std::vector<double> values;      // f32 / f64 blobs
  std::vector<std::uint64_t> ints;  // u64 blobs
};

struct ParsedCheckpoint {
  std::string spec_text;
  std::map<std::string, Blob> blobs;
};

ParsedCheckpoint parse(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, ErrorCode::CorruptBlob);
  if (!r.match_magic(kMagic)) throw Error(ErrorCode::CorruptBlob, "not a checkpoint (bad magic)");
  const auto version = r.get_u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  if (bytes.size() < 12) throw Error(ErrorCode::CorruptBlob, "truncated checkpoint");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body.size(), 4);
  if (crc_of(body) != stored_crc) throw Error(ErrorCode::CorruptBlob, "file checksum mismatch (truncated or damaged)");

  io::ByteReader br(body, ErrorCode::CorruptBlob);
  br.view(8);
  ParsedCheckpoint out;
  out.spec_text = br.get_string();
  const auto count = br.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = br.get_string();
    Blob blob;
    const auto tag = br.get_u8();
    if (tag > static_cast<std::uint8_t>(DType::U64))
      throw Error(ErrorCode::CorruptBlob, name + ": unknown dtype " + std::to_string(tag));
    blob.dtype = static_cast<DType>(tag);
    const auto rank = br.get_u8();
    for (std::uint8_t d = 0; d < rank; ++d) blob.shape.push_back(br.get_u32());
    const std::size_t n = shape_size(blob.shape);
    const std::size_t width = blob.dtype == DType::F32 ? 4 : 8;
    const auto raw = br.view(n * width);
    if (crc_of(raw) != br.get_u32()) throw Error(ErrorCode::CorruptBlob, name + ": data checksum mismatch");
    if (blob.dtype == DType::U64) {
      blob.ints.resize(n);
      std::memcpy(blob.ints.data(), raw.data(), raw.size());
    } else if (blob.dtype == DType::F64) {
      blob.values.resize(n);
      std::memcpy(blob.values.data(), raw.data(), raw.size());
    } else {
      std::vector<float> f(n);
      std::memcpy(f.data(), raw.data(), raw.size());
      blob.values.assign(f.begin(), f.end());
    }
    if (!out.blobs.emplace(std::move(name), std::move(blob)).second)
      throw Error(ErrorCode::CorruptBlob, "duplicate blob name");
  }
  if (br.remaining() != 0) throw Error(ErrorCode::CorruptBlob, "trailing bytes after last blob");
  return out;
}

std::uint64_t read_counter(const ParsedCheckpoint& cp, std::string_view name) {
  auto it = cp.blobs.find(std::string(name));
  if (it == cp.blobs.end()) throw Error(ErrorCode::MissingParam, std::string(name));
  if (it->second.dtype != DType::U64 || it->second.ints.size() != 1)
    throw Error(ErrorCode::CorruptBlob, std::string(name) + " must be a single u64");
  return it->second.ints[0];
}

TrainingState restore(Model& model, const ParsedCheckpoint& cp) {
  std::set<std::string> consumed{std::string(kEpochName), std::string(kRngName)};
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = cp.blobs.find(name);
    if (it == cp.blobs.end() || it->second.dtype == DType::U64)
      throw Error(ErrorCode::MissingParam, "checkpoint has no tensor '" + name + "'");
    if (it->second.shape != dst.shape())
      throw Error(ErrorCode::MissingParam, "'" + name + "' is " + shape_string(it->second.shape) + " in the checkpoint but " +
                                               shape_string(dst.shape()) + " in the model");
    std::copy(it->second.values.begin(), it->second.values.end(), dst.data().begin());
    consumed.insert(name);
  };
  for (auto& nt : model.state()) take(nt.name, *nt.tensor);

  TrainingState state;
  auto params = model.parameters();
  std::size_t with_velocity = 0;
  for (auto& p : params)
    if (cp.blobs.count(std::string(kVelocityPrefix) + p.name)) ++with_velocity;
  if (with_velocity != 0) {
    if (with_velocity != params.size()) throw Error(ErrorCode::MissingParam, "optimizer state covers only some parameters");
    for (auto& p : params) {
      state.velocity.emplace_back(p.tensor->shape(), 0.0);
      take(std::string(kVelocityPrefix) + p.name, state.velocity.back());
    }
  }
  for (const auto& [name, blob] : cp.blobs)
    if (!consumed.count(name)) throw Error(ErrorCode::MissingParam, "checkpoint tensor '" + name + "' has no place in the model");
  state.epoch = read_counter(cp, kEpochName);
  state.rng_state = read_counter(cp, kRngName);
  return state;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(Model& model, const TrainingState& state) {
  auto named = model.state();
  auto params = model.parameters();
  if (!state.velocity.empty() && state.velocity.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match the parameter list");

  io::ByteWriter w;
  w.put_magic(kMagic);
  w.put_u32(kCheckpointVersion);
  w.put_string(model.spec().canonical());
  w.put_u32(static_cast<std::uint32_t>(named.size() + state.velocity.size() + 2));
  for (const auto& nt : named)
    put_blob(w, nt.name, DType::F64, nt.tensor->shape(), nt.tensor->data().data(), nt.tensor->data().size_bytes());
  for (std::size_t i = 0; i < state.velocity.size(); ++i) {
    const Tensor& v = state.velocity[i];
    put_blob(w, std::string(kVelocityPrefix) + params[i].name, DType::F64, v.shape(), v.data().data(),
             v.data().size_bytes());
  }
  put_blob(w, kEpochName, DType::U64, {1}, &state.epoch, 8);
  put_blob(w, kRngName, DType::U64, {1}, &state.rng_state, 8);
  const auto crc = crc_of(w.bytes());
  w.put_u32(crc);
  return w.bytes();
}

void save_checkpoint(const std::string& path, Model& model, const TrainingState& state) {
  io::write_file(path, encode_checkpoint(model, state));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const auto bytes = io::read_file(path);
  const auto cp = parse(bytes);
  ResNetSpec spec;
  try {
    spec = ResNetSpec::parse(cp.spec_text);
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptBlob, std::string("stored spec unreadable: ") + e.what());
  }
  LoadedCheckpoint out{Model(spec, 0), {}};
  out.state = restore(out.model, cp);
  return out;
}

TrainingState restore_checkpoint(Model& model, const std::string& path) {
  const auto bytes = io::read_file(path);
  return restore(model, parse(bytes));
}

}  // namespace railwave
