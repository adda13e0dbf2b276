#include <filesystem>

#include "doctest.h"
#include "dcic/checkpoint.hpp"
#include "dcic/codec.hpp"
#include "dcic/config.hpp"
#include "dcic/error.hpp"
#include "gradcheck.hpp"

using namespace dcic;

namespace {

CompressorConfig small_codec() {
  CompressorConfig c;
  c.encoder_width1 = 8;
  c.encoder_width2 = 12;
  c.decoder_width1 = 12;
  c.decoder_width2 = 8;
  c.decoder_width3 = 4;
  c.residual_units = 1;
  c.channels = 4;
  return c;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::usage;
}

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// Pushes batch-norm statistics and weights away from their initial values so
// a round trip that silently reinitialized something would be noticed.
void perturb(ParameterStore& s, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : s.tensors())
    for (float& v : t->values()) v += rng.uniform(0.1f, 0.5f);
}

}  // namespace

TEST_CASE("compressor checkpoints reproduce the forward pass bit-exactly") {
  CompressionModel m(small_codec(), 5);
  perturb(m.store(), 1);
  m.set_pixel_mean({101.5f, 99.0f, 97.25f});
  Rng rng(2);
  const Tensor probe = testing::random_tensor({2, 3, 16, 16}, rng, 0.0f, 255.0f);

  const auto bytes = encode_checkpoint(m, 5);
  CHECK(checkpoint_kind(bytes) == ModelKind::compressor);
  CompressionModel back = decode_compressor(bytes);
  CHECK(back.pixel_mean() == m.pixel_mean());
  CHECK(same(reconstruct(back, representation(back, probe)), reconstruct(m, representation(m, probe))));
  CHECK(encode_checkpoint(back, 5) == bytes);
}

TEST_CASE("network checkpoints reproduce the forward pass bit-exactly") {
  for (const char* variant : {"cResNet-39", "cResNet-39-d", "ResNet-50"}) {
    CAPTURE(variant);
    const bool rgb = std::string(variant).starts_with("ResNet");
    Network n(network_spec(variant, 7, rgb ? 3 : 4, 4), 9);
    perturb(n.store(), 3);
    const std::vector<float> mean(rgb ? 3 : 4, 0.5f);
    Rng rng(4);
    const Tensor probe = testing::random_tensor({2, rgb ? 3 : 4, rgb ? 32 : 4, rgb ? 32 : 4}, rng);

    const auto bytes = encode_checkpoint(n, mean, 9);
    const ModelKind kind = n.spec().head == Head::aspp ? ModelKind::segmenter : ModelKind::classifier;
    NetworkCheckpoint back = decode_network(bytes, kind);
    CHECK(back.mean == mean);
    CHECK(back.seed == 9);
    CHECK(back.network.spec().variant == variant);
    Tape a(false), b(false);
    CHECK(same(back.network.forward(a.constant(probe), Mode::eval).value(), n.forward(b.constant(probe), Mode::eval).value()));
  }
}

TEST_CASE("checkpoint errors") {
  CompressionModel m(small_codec(), 5);
  const auto comp = encode_checkpoint(m, 5);
  Network n(network_spec("cResNet-39", 7, 4, 4), 9);
  const auto net = encode_checkpoint(n, {}, 9);

  SUBCASE("truncated") {
    for (std::size_t cut : {std::size_t{3}, std::size_t{20}, comp.size() / 2, comp.size() - 1}) {
      const std::vector<std::uint8_t> t(comp.begin(), comp.begin() + static_cast<std::ptrdiff_t>(cut));
      try {
        decode_compressor(t);
        FAIL("accepted a truncated file");
      } catch (const Error& e) {
        CHECK(e.code() == Errc::truncated);
        CHECK(std::string(e.what()).find("truncated checkpoint") != std::string::npos);
      }
    }
  }
  SUBCASE("kind mismatch") {
    try {
      decode_network(comp, ModelKind::classifier);
      FAIL("accepted a compressor as a classifier");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kind_mismatch);
      CHECK(std::string(e.what()).find("kind mismatch") != std::string::npos);
    }
    CHECK(code_of([&] { decode_compressor(net); }) == Errc::kind_mismatch);
    CHECK(code_of([&] { decode_network(net, ModelKind::segmenter); }) == Errc::kind_mismatch);
  }
  SUBCASE("version is checked before anything else") {
    // a newer version whose body is garbage still reports the version
    std::vector<std::uint8_t> v(comp.begin(), comp.begin() + 7);
    v[4] = 2;
    CHECK(code_of([&] { decode_compressor(v); }) == Errc::unsupported_version);
  }
  SUBCASE("bad magic") {
    auto b = comp;
    b[0] = 'X';
    CHECK(code_of([&] { decode_compressor(b); }) == Errc::bad_magic);
  }
  SUBCASE("shape mismatch on load into a different network") {
    Network other(network_spec("cResNet-39", 7, 4, 8), 9);
    const std::uint64_t before = checksum(other.store());
    CHECK(code_of([&] { decode_parameters_into(net, other); }) == Errc::shape_mismatch);
    CHECK(checksum(other.store()) == before);
    Network same_spec(network_spec("cResNet-39", 7, 4, 4), 1);
    decode_parameters_into(net, same_spec);
    CHECK(checksum(same_spec.store()) == checksum(n.store()));
  }
  SUBCASE("files") {
    const auto path = (std::filesystem::temp_directory_path() / "dcic_test_ckpt.dcic").string();
    save_checkpoint(path, n, {}, 9);
    CHECK(load_network(path, ModelKind::classifier).network.spec().variant == "cResNet-39");
    CHECK(code_of([&] { load_compressor(path); }) == Errc::kind_mismatch);
    std::filesystem::remove(path);
    CHECK(code_of([&] { load_compressor(path); }) == Errc::io);
  }
}

TEST_CASE("config parsing") {
  Config c;
  CHECK(c.get_double("classifier.lr") == 0.025);
  c.merge_text("# comment\nclassifier.lr = 0.1  # trailing\n\nseed=7\n");
  CHECK(c.get_double("classifier.lr") == 0.1);
  CHECK(c.get_u64("seed") == 7);
  c.set("classifier.lr=0.2");
  CHECK(c.get_float("classifier.lr") == 0.2f);
  CHECK(c.get_list("classifier.milestones") == std::vector<double>{8, 16, 24});
  c.set("classifier.milestones=");
  CHECK(c.get_list("classifier.milestones").empty());

  CHECK(code_of([&] { c.set("classifier.nope=1"); }) == Errc::usage);
  CHECK(code_of([&] { c.merge_text("no equals sign\n"); }) == Errc::usage);
  c.set("classifier.epochs=ten");
  CHECK(code_of([&] { c.get_int("classifier.epochs"); }) == Errc::usage);
  c.set("classifier.mirror=maybe");
  CHECK(code_of([&] { c.get_bool("classifier.mirror"); }) == Errc::usage);
  c.set("classifier.source=jpeg");
  CHECK(code_of([&] { classifier_options(c); }) == Errc::usage);
}

TEST_CASE("config text round trips and maps onto training options") {
  Config a;
  a.set("joint.mode=compression_only");
  a.set("compressor.channels=16");
  Config b;
  b.merge_text(a.text());
  CHECK(b.text() == a.text());
  CHECK(joint_options(b).mode == JointMode::compression_only);
  CHECK(compressor_options(b).model.channels == 16);
  CHECK(segmenter_options(b).head_lr_mult == 10.0f);

  Config d;
  d.set("data.train=12");
  d.set("data.test=5");
  d.set("data.probe_mosaics=1");
  d.set("data.probe_side=2");
  const DataSplits s = load_data(d, true);
  CHECK(s.train.size() == 12);
  CHECK(s.test.size() == 5);
  REQUIRE(s.probe.size() == 1);
  CHECK(s.probe[0].shape() == Shape{3, 128, 128});
  // splits draw from disjoint parts of the stream
  CHECK_FALSE(same(s.train.get(0).image, s.test.get(0).image));
}
