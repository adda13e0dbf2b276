#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "dcic/dcic.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  fs::path p = fs::temp_directory_path() / "dcic_test_capi";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Config {
  dcic_config* c = nullptr;
  Config() { REQUIRE(dcic_config_create(&c) == DCIC_OK); }
  ~Config() { dcic_config_destroy(c); }
  void set(const char* kv) { REQUIRE(dcic_config_set(c, kv) == DCIC_OK); }
};

void tiny(Config& cfg) {
  for (const char* kv : {"compressor.encoder_width1=8", "compressor.encoder_width2=8", "compressor.decoder_width1=8",
                         "compressor.decoder_width2=8", "compressor.decoder_width3=8", "compressor.residual_units=1",
                         "compressor.iterations=2", "compressor.batch_size=2", "compressor.log_every=1", "data.size=32",
                         "data.train=16", "data.test=8", "data.probe_mosaics=1", "data.probe_side=2",
                         "classifier.base_width=8", "classifier.epochs=1", "classifier.batch_size=8",
                         "classifier.milestones=", "segmenter.iterations=2", "segmenter.batch_size=2",
                         "segmenter.log_every=1", "joint.epochs=1", "joint.batch_size=8", "joint.milestones="})
    cfg.set(kv);
}

}  // namespace

TEST_CASE("status codes and error text") {
  CHECK(std::string(dcic_status_name(DCIC_OK)) == "ok");
  CHECK(std::string(dcic_status_name(DCIC_ERR_KIND_MISMATCH)) == "kind mismatch");
  Config cfg;
  CHECK(dcic_config_set(cfg.c, "no.such.key=1") == DCIC_ERR_USAGE);
  CHECK(std::string(dcic_last_error()).find("no.such.key") != std::string::npos);
  CHECK(dcic_config_set(cfg.c, "seed=2") == DCIC_OK);
  CHECK(std::string(dcic_last_error()).empty());
  CHECK(dcic_config_set(nullptr, "seed=2") == DCIC_ERR_INVALID_ARGUMENT);
  CHECK(dcic_config_load(cfg.c, "/nonexistent/file.cfg") == DCIC_ERR_IO);
}

TEST_CASE("text outputs report their full length") {
  Config cfg;
  char small[4];
  size_t len = 0;
  REQUIRE(dcic_config_get(cfg.c, "classifier.variant", small, sizeof small, &len) == DCIC_OK);
  CHECK(len == std::strlen("cResNet-39"));
  CHECK(std::string(small) == "cRe");
  std::vector<char> big(len + 1);
  REQUIRE(dcic_config_get(cfg.c, "classifier.variant", big.data(), big.size(), nullptr) == DCIC_OK);
  CHECK(std::string(big.data()) == "cResNet-39");
}

TEST_CASE("flop counts through the C interface") {
  Config cfg;
  cfg.set("data.classes=1000");
  double total = 0.0;
  size_t len = 0;
  REQUIRE(dcic_flops(cfg.c, "cResNet-51", 28, 28, 8, nullptr, 0, &len, &total) == DCIC_OK);
  CHECK(total == doctest::Approx(3.83e9).epsilon(0.02));
  CHECK(len > 0);
  double ratio = 0.0;
  REQUIRE(dcic_cost_comparison(cfg.c, "cResNet-51", "ResNet-50", 224, 224, nullptr, 0, nullptr, &ratio) == DCIC_OK);
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 2.0);
  CHECK(dcic_flops(cfg.c, "ResNet-7", 224, 224, 3, nullptr, 0, nullptr, nullptr) == DCIC_ERR_INVALID_ARGUMENT);
}

TEST_CASE("end to end through the C interface") {
  const fs::path dir = scratch();
  Config cfg;
  tiny(cfg);
  REQUIRE(dcic_generate_data(cfg.c, dir.string().c_str()) == DCIC_OK);
  CHECK(fs::exists(dir / "train" / "manifest.tsv"));
  CHECK(fs::exists(dir / "test" / "000007.ppm"));

  dcic_compressor* codec = nullptr;
  dcic_quality q{};
  const std::string trace = (dir / "compressor.tsv").string();
  REQUIRE(dcic_train_compressor(cfg.c, trace.c_str(), nullptr, nullptr, &codec, &q) == DCIC_OK);
  CHECK(q.bpp > 0.0);
  CHECK(fs::exists(trace));
  const std::string ckpt = (dir / "codec.dcic").string();
  REQUIRE(dcic_compressor_save(codec, ckpt.c_str()) == DCIC_OK);

  const std::string img = (dir / "test" / "000000.ppm").string();
  const std::string coded = (dir / "x.dcr").string(), back = (dir / "x.ppm").string();
  double bpp = 0.0;
  REQUIRE(dcic_encode_file(codec, img.c_str(), coded.c_str(), &bpp) == DCIC_OK);
  REQUIRE(dcic_decode_file(codec, coded.c_str(), back.c_str()) == DCIC_OK);
  dcic_image_metrics m{};
  REQUIRE(dcic_compare_images(img.c_str(), back.c_str(), &m) == DCIC_OK);
  CHECK(m.ms_ssim < 0.0);  // 32x32 is too small for five scales
  CHECK(m.psnr > 0.0);

  dcic_network* cls = nullptr;
  dcic_accuracy acc{};
  int rows = 0;
  auto count = [](const char*, void* user) { ++*static_cast<int*>(user); };
  REQUIRE(dcic_train_classifier(cfg.c, codec, nullptr, nullptr, count, &rows, &cls, &acc) == DCIC_OK);
  CHECK(rows == 2);  // header + one epoch
  dcic_accuracy again{};
  REQUIRE(dcic_eval_classifier(cfg.c, codec, cls, &again) == DCIC_OK);
  CHECK(again.top1 == acc.top1);

  const std::string net_path = (dir / "cls.dcic").string();
  REQUIRE(dcic_network_save(cls, net_path.c_str()) == DCIC_OK);
  dcic_network* loaded = nullptr;
  REQUIRE(dcic_network_load(net_path.c_str(), &loaded) == DCIC_OK);
  REQUIRE(dcic_eval_classifier(cfg.c, codec, loaded, &again) == DCIC_OK);
  CHECK(again.top1 == acc.top1);
  dcic_compressor* wrong = nullptr;
  CHECK(dcic_compressor_load(net_path.c_str(), &wrong) == DCIC_ERR_KIND_MISMATCH);
  CHECK(wrong == nullptr);

  dcic_network* seg = nullptr;
  dcic_segmentation s{};
  cfg.set("segmenter.variant=cResNet-51-d");
  CHECK(dcic_train_segmenter(cfg.c, codec, cls, nullptr, nullptr, nullptr, &seg, &s) == DCIC_ERR_SHAPE_MISMATCH);
  cfg.set("segmenter.variant=cResNet-39-d");
  REQUIRE(dcic_train_segmenter(cfg.c, codec, cls, nullptr, nullptr, nullptr, &seg, &s) == DCIC_OK);
  int is_seg = 0;
  REQUIRE(dcic_network_is_segmenter(seg, &is_seg) == DCIC_OK);
  CHECK(is_seg == 1);
  dcic_segmentation s2{};
  REQUIRE(dcic_eval_segmenter(cfg.c, codec, seg, &s2) == DCIC_OK);
  CHECK(s2.miou == s.miou);
  CHECK(dcic_eval_classifier(cfg.c, codec, seg, &again) == DCIC_ERR_KIND_MISMATCH);

  dcic_joint_result j{};
  REQUIRE(dcic_train_joint(cfg.c, codec, cls, nullptr, nullptr, nullptr, &j) == DCIC_OK);
  CHECK(j.max_additivity_error < 1e-6);
  CHECK(j.before.bpp > 0.0);
  cfg.set("joint.gamma=-1");
  CHECK(dcic_train_joint(cfg.c, codec, cls, nullptr, nullptr, nullptr, &j) == DCIC_ERR_INVALID_ARGUMENT);

  dcic_network_destroy(seg);
  dcic_network_destroy(loaded);
  dcic_network_destroy(cls);
  dcic_compressor_destroy(codec);
  fs::remove_all(dir);
}

TEST_CASE("bench discards the warm-up run") {
  Config cfg;
  tiny(cfg);
  cfg.set("classifier.base_width=4");
  cfg.set("data.classes=10");
  dcic_timing direct{}, pipeline{};
  REQUIRE(dcic_bench(cfg.c, nullptr, "cResNet-51", "ResNet-50", 32, 32, 3, &direct, &pipeline, nullptr, 0, nullptr) ==
          DCIC_OK);
  CHECK(direct.samples == 2);
  CHECK(pipeline.samples == 2);
  CHECK(direct.flops < pipeline.flops);
  CHECK(dcic_bench(cfg.c, nullptr, "cResNet-51", "ResNet-50", 32, 32, 2, &direct, &pipeline, nullptr, 0, nullptr) ==
        DCIC_ERR_INVALID_ARGUMENT);
}
