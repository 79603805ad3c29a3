#include "spencer/checkpoint.hpp"

#include <zlib.h>

#include "serial.hpp"

namespace spencer {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'N', 'C'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kMaxRank = 8;

uint32_t crc_of(const uint8_t* data, size_t size) {
  return static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data),
              static_cast<uInt>(size)));
}

void write_tensor(serial::Writer& w, const Tensor& t) {
  w.u32(static_cast<uint32_t>(t.rank()));
  for (size_t d : t.shape()) w.u32(static_cast<uint32_t>(d));
  for (double v : t.values()) w.f64(v);
}

Tensor read_tensor(serial::Reader& r) {
  const uint32_t rank = r.u32();
  if (rank == 0 || rank > kMaxRank)
    throw FormatError("checkpoint: implausible tensor rank " +
                      std::to_string(rank));
  std::vector<size_t> shape(rank);
  size_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = r.u32();
    if (shape[i] == 0) throw FormatError("checkpoint: zero dimension");
    numel *= shape[i];
    if (numel > (1u << 30)) throw FormatError("checkpoint: oversized tensor");
  }
  std::vector<double> data(numel);
  for (size_t i = 0; i < numel; ++i) data[i] = r.f64();
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

std::vector<uint8_t> serialize_model(const EncoderModel& model) {
  serial::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(model.vocab_buckets);
  w.u32(static_cast<uint32_t>(model.dim));
  w.u32(static_cast<uint32_t>(model.hidden));
  w.u32(static_cast<uint32_t>(model.layer_count()));
  w.f64(model.dropout_rate);
  w.u8(model.has_score_head() ? 1 : 0);
  for (const Tensor* t : model.param_tensors()) write_tensor(w, *t);
  const uint32_t crc = crc_of(w.data().data(), w.data().size());
  w.u32(crc);
  return std::move(w.data());
}

void save_model(const EncoderModel& model, const std::string& path) {
  serial::write_file(path, serialize_model(model), "checkpoint");
}

EncoderModel load_model(const std::string& path) {
  const std::vector<uint8_t> bytes = serial::read_file(path, "checkpoint");
  if (bytes.size() < 4 + 4 + 4)
    throw TruncatedError("checkpoint: " + path + " is too short");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("checkpoint: " + path + " has wrong magic bytes");

  serial::Reader r(bytes.data() + 4, bytes.size() - 4, "checkpoint");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw VersionError("checkpoint: format version " +
                       std::to_string(version) + ", expected " +
                       std::to_string(kVersion));

  EncoderModel m;
  m.vocab_buckets = r.u32();
  m.dim = r.u32();
  m.hidden = r.u32();
  const uint32_t layers = r.u32();
  m.dropout_rate = r.f64();
  const bool has_head = r.u8() != 0;

  m.embedding = read_tensor(r);
  m.blocks.resize(layers);
  for (uint32_t i = 0; i < layers; ++i) {
    m.blocks[i].w1 = read_tensor(r);
    m.blocks[i].b1 = read_tensor(r);
    m.blocks[i].w2 = read_tensor(r);
    m.blocks[i].b2 = read_tensor(r);
  }
  if (has_head) {
    ScoreHead head;
    head.w = read_tensor(r);
    head.b = read_tensor(r);
    m.score_head = std::move(head);
  }

  if (r.remaining() < 4)
    throw TruncatedError("checkpoint: " + path + " is missing its checksum");
  const size_t payload = 4 + r.pos();
  const uint32_t stored = r.u32();
  if (r.remaining() != 0)
    throw FormatError("checkpoint: " + path + " has trailing bytes");
  const uint32_t actual = crc_of(bytes.data(), payload);
  if (stored != actual)
    throw ChecksumError("checkpoint: " + path + " checksum mismatch");

  if (m.embedding.rank() != 2 || m.embedding.rows() != m.vocab_buckets ||
      m.embedding.cols() != m.dim)
    throw FormatError("checkpoint: embedding shape " +
                      shape_str(m.embedding) + " disagrees with header");
  return m;
}

uint32_t model_fingerprint(const EncoderModel& model) {
  const std::vector<uint8_t> bytes = serialize_model(model);
  return crc_of(bytes.data(), bytes.size());
}

}  // namespace spencer
