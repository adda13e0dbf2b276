#include "dcic/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <optional>

#include "dcic/bytes.hpp"
#include "dcic/error.hpp"

namespace dcic {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'I', 'C'};

void write_header(ByteWriter& w, ModelKind kind) {
  w.raw(std::string_view(kMagic, 4));
  w.u16(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
}

void write_floats(ByteWriter& w, std::span<const float> v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (float x : v) w.f32(x);
}

std::vector<float> read_floats(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 4) fail(Errc::truncated, "truncated checkpoint");
  std::vector<float> v(n);
  for (float& x : v) x = r.f32();
  return v;
}

void write_tensors(ByteWriter& w, const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t i = 0; i < t->rank(); ++i) w.u32(static_cast<std::uint32_t>(t->dim(i)));
    for (float x : t->values()) w.f32(x);
  }
}

void read_tensors(ByteReader& r, std::vector<std::pair<std::string, Tensor*>> into) {
  const std::uint32_t count = r.u32();
  require(count == into.size(), Errc::shape_mismatch,
          "shape mismatch: checkpoint has " + std::to_string(count) + " tensors, model has " + std::to_string(into.size()));
  // staged so a failed load leaves the model untouched
  std::vector<Tensor> staged(into.size());
  std::vector<bool> seen(into.size(), false);
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    require(rank <= 8, Errc::corrupt, "corrupt checkpoint: tensor " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    for (int& d : shape) d = static_cast<int>(r.u32());
    const auto it = std::find_if(into.begin(), into.end(), [&](const auto& p) { return p.first == name; });
    require(it != into.end(), Errc::shape_mismatch, "shape mismatch: model has no tensor " + name);
    const std::size_t slot = static_cast<std::size_t>(it - into.begin());
    require(!seen[slot], Errc::corrupt, "corrupt checkpoint: tensor " + name + " appears twice");
    Tensor& t = staged[slot];
    t = Tensor(it->second->shape());
    require(t.shape() == shape, Errc::shape_mismatch,
            "shape mismatch for " + name + ": checkpoint " + shape_string(shape) + ", model " + shape_string(t.shape()));
    const auto raw = r.raw(t.numel() * 4);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
      t[i] = std::bit_cast<float>(u);
    }
    seen[slot] = true;
  }
  require(r.remaining() == 0, Errc::corrupt, "corrupt checkpoint: trailing bytes");
  for (std::size_t i = 0; i < into.size(); ++i) *into[i].second = std::move(staged[i]);
}

// Magic, version and kind; the version is checked before anything else is read.
ModelKind read_header(ByteReader& r) {
  const auto magic = r.raw(4);
  require(std::memcmp(magic.data(), kMagic, 4) == 0, Errc::bad_magic, "not a checkpoint (bad magic)");
  const std::uint16_t version = r.u16();
  require(version == kCheckpointVersion, Errc::unsupported_version,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const std::uint8_t kind = r.u8();
  require(kind >= 1 && kind <= 3, Errc::corrupt, "corrupt checkpoint: unknown model kind " + std::to_string(kind));
  return static_cast<ModelKind>(kind);
}

void expect_kind(ModelKind got, ModelKind want) {
  require(got == want, Errc::kind_mismatch,
          std::string("kind mismatch: checkpoint holds a ") + model_kind_name(got) + ", expected a " + model_kind_name(want));
}

struct NetworkHeader {
  NetworkSpec spec;
  std::vector<float> mean;
  std::uint64_t seed = 0;
};

NetworkHeader read_network_header(ByteReader& r) {
  NetworkHeader h;
  const std::string variant = r.str();
  const int classes = static_cast<int>(r.u32());
  const int channels = static_cast<int>(r.u32());
  const int width = static_cast<int>(r.u32());
  h.mean = read_floats(r);
  h.seed = r.u64();
  try {
    h.spec = network_spec(variant, classes, channels, width);
  } catch (const Error& e) {
    fail(Errc::corrupt, std::string("corrupt checkpoint: ") + e.what());
  }
  return h;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::compressor: return "compressor";
    case ModelKind::classifier: return "classifier";
    case ModelKind::segmenter: return "segmenter";
  }
  return "?";
}

std::vector<std::uint8_t> encode_checkpoint(const CompressionModel& model, std::uint64_t seed) {
  ByteWriter w;
  write_header(w, ModelKind::compressor);
  const CompressorConfig& c = model.config();
  for (int v : {c.channels, c.levels, c.encoder_width1, c.encoder_width2, c.decoder_width1, c.decoder_width2, c.decoder_width3,
                c.residual_units})
    w.u32(static_cast<std::uint32_t>(v));
  for (float v : {c.sigma, c.center_range, c.beta, c.target_entropy, c.pixel_scale}) w.f32(v);
  write_floats(w, model.pixel_mean());
  w.u64(seed);
  write_tensors(w, model.store().tensors());
  return w.take();
}

std::vector<std::uint8_t> encode_checkpoint(const Network& network, const std::vector<float>& mean, std::uint64_t seed) {
  ByteWriter w;
  const NetworkSpec& s = network.spec();
  write_header(w, s.head == Head::aspp ? ModelKind::segmenter : ModelKind::classifier);
  w.str(s.variant);
  w.u32(static_cast<std::uint32_t>(s.num_classes));
  w.u32(static_cast<std::uint32_t>(s.input_channels));
  w.u32(static_cast<std::uint32_t>(s.root_width));
  write_floats(w, mean);
  w.u64(seed);
  write_tensors(w, network.store().tensors());
  return w.take();
}

ModelKind checkpoint_kind(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  return read_header(r);
}

CompressionModel decode_compressor(std::span<const std::uint8_t> bytes, std::uint64_t* seed_out) {
  ByteReader r(bytes, "checkpoint");
  expect_kind(read_header(r), ModelKind::compressor);
  CompressorConfig c;
  for (int* v : {&c.channels, &c.levels, &c.encoder_width1, &c.encoder_width2, &c.decoder_width1, &c.decoder_width2,
                 &c.decoder_width3, &c.residual_units})
    *v = static_cast<int>(r.u32());
  for (float* v : {&c.sigma, &c.center_range, &c.beta, &c.target_entropy, &c.pixel_scale}) *v = r.f32();
  const std::vector<float> mean = read_floats(r);
  require(mean.size() == 3, Errc::corrupt, "corrupt checkpoint: compressor pixel mean must have 3 channels");
  const std::uint64_t seed = r.u64();
  std::optional<CompressionModel> model;
  try {
    model.emplace(c, seed);
  } catch (const Error& e) {
    fail(Errc::corrupt, std::string("corrupt checkpoint: ") + e.what());
  }
  model->set_pixel_mean({mean[0], mean[1], mean[2]});
  read_tensors(r, model->store().tensors());
  if (seed_out) *seed_out = seed;
  return std::move(*model);
}

NetworkCheckpoint decode_network(std::span<const std::uint8_t> bytes, ModelKind expected) {
  ByteReader r(bytes, "checkpoint");
  expect_kind(read_header(r), expected);
  NetworkHeader h = read_network_header(r);
  NetworkCheckpoint out{Network(h.spec, h.seed), std::move(h.mean), h.seed};
  read_tensors(r, out.network.store().tensors());
  return out;
}

void decode_parameters_into(std::span<const std::uint8_t> bytes, Network& network) {
  ByteReader r(bytes, "checkpoint");
  const ModelKind kind = read_header(r);
  require(kind != ModelKind::compressor, Errc::kind_mismatch, "kind mismatch: checkpoint holds a compressor, expected a network");
  read_network_header(r);
  read_tensors(r, network.store().tensors());
}

void save_checkpoint(const std::string& path, const CompressionModel& model, std::uint64_t seed) {
  write_file(path, encode_checkpoint(model, seed));
}

void save_checkpoint(const std::string& path, const Network& network, const std::vector<float>& mean, std::uint64_t seed) {
  write_file(path, encode_checkpoint(network, mean, seed));
}

CompressionModel load_compressor(const std::string& path) { return decode_compressor(read_file(path)); }

NetworkCheckpoint load_network(const std::string& path, ModelKind expected) {
  return decode_network(read_file(path), expected);
}

}  // namespace dcic
