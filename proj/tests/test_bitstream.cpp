#include <cmath>
#include <cstring>

#include "doctest.h"
#include "dcic/bitstream.hpp"
#include "dcic/compression.hpp"
#include "dcic/error.hpp"
#include "dcic/rng.hpp"

using namespace dcic;

namespace {

SymbolMap random_map(Rng& rng, int levels, int w, int h, int channels, bool skewed) {
  SymbolMap m;
  m.width = static_cast<std::uint32_t>(w);
  m.height = static_cast<std::uint32_t>(h);
  m.channels = channels;
  for (int j = 0; j < levels; ++j) m.centers.push_back(-1.0f + 0.37f * j);
  m.symbols.resize(m.expected_count());
  for (auto& s : m.symbols) {
    int v = rng.below(levels);
    if (skewed && rng.uniform() < 0.8f) v = 0;
    s = static_cast<std::uint8_t>(v);
  }
  return m;
}

Errc error_of(std::span<const std::uint8_t> bytes) {
  try {
    deserialize(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected deserialize to fail");
  return Errc::usage;
}

// Cross entropy of the empirical histogram under the smoothed model, in bits.
double smoothed_bits(const std::vector<std::uint8_t>& symbols, int levels) {
  const std::vector<std::uint32_t> f = symbol_frequencies(symbols, levels);
  double total = 0.0;
  for (auto v : f) total += v;
  double bits = 0.0;
  for (std::uint8_t s : symbols) bits -= std::log2(f[s] / total);
  return bits;
}

}  // namespace

TEST_CASE("symbol frequencies") {
  CHECK(symbol_frequencies(std::vector<std::uint8_t>{}, 3) == std::vector<std::uint32_t>{1, 1, 1});
  CHECK(symbol_frequencies(std::vector<std::uint8_t>{0, 0, 1}, 2) == std::vector<std::uint32_t>{3, 2});
  Rng rng(1);
  std::vector<std::uint8_t> s(777);
  for (auto& v : s) v = static_cast<std::uint8_t>(rng.below(5));
  std::uint64_t total = 0;
  for (auto v : symbol_frequencies(s, 5)) total += v;
  CHECK(total == 777 + 5);
  CHECK_THROWS_AS(symbol_frequencies(std::vector<std::uint8_t>{3}, 3), Error);
}

TEST_CASE("header layout") {
  for (int L : {1, 2, 6, 16}) {
    SymbolMap m;
    m.channels = 4;
    m.centers.assign(L, 0.0f);
    const auto bytes = serialize(m);
    CHECK(bytes.size() == coded_header_size(L));
    CHECK(bytes.size() == 20 + 8 * static_cast<std::size_t>(L));
    CHECK(std::memcmp(bytes.data(), "DCR1", 4) == 0);
    SymbolMap back = deserialize(bytes);
    CHECK(back.symbols.empty());
    CHECK(back.centers == m.centers);
    CHECK(measured_bpp(bytes.size(), 8, 8) > 0.0);
  }
}

TEST_CASE("coder efficiency") {
  std::vector<std::uint8_t> same(10000, 2);
  CHECK(range_encode(same, symbol_frequencies(same, 4)).size() < 32);

  Rng rng(2);
  std::vector<std::uint8_t> uni(10000);
  for (auto& v : uni) v = static_cast<std::uint8_t>(rng.below(4));
  const auto payload = range_encode(uni, symbol_frequencies(uni, 4));
  CHECK(std::abs(static_cast<double>(payload.size()) - 2500.0) <= 25.0);
  CHECK(range_decode(payload, symbol_frequencies(uni, 4), uni.size()) == uni);
}

TEST_CASE("round trip and rate bound on random maps") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int L = 2 + rng.below(15);
    const int w = 8 * (1 + rng.below(8)), h = 8 * (1 + rng.below(8)), c = 1 + rng.below(32);
    SymbolMap m = random_map(rng, L, w, h, c, trial % 2 == 0);
    const auto bytes = serialize(m);
    SymbolMap back = deserialize(bytes);
    REQUIRE(back.symbols == m.symbols);
    CHECK(back.centers == m.centers);
    CHECK(back.width == m.width);
    CHECK(back.height == m.height);
    CHECK(back.channels == m.channels);
    const double payload_bits = 8.0 * (bytes.size() - coded_header_size(L));
    CHECK(payload_bits <= smoothed_bits(m.symbols, L) + 64.0);
    CHECK(serialize(m) == bytes);
  }
}

TEST_CASE("container errors") {
  Rng rng(4);
  SymbolMap m = random_map(rng, 6, 32, 32, 8, true);
  auto bytes = serialize(m);

  auto bad = bytes;
  bad[0] ^= 0xFF;
  CHECK(error_of(bad) == Errc::bad_magic);
  bad = bytes;
  bad[4] = 9;
  CHECK(error_of(bad) == Errc::unsupported_version);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, coded_header_size(6) - 1, bytes.size() - 1, bytes.size() - 5})
    CHECK(error_of(std::span(bytes).first(cut)) == Errc::truncated);
  // a shortened payload with a consistent length field is still caught
  auto shorter = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1);
  const std::uint32_t len = static_cast<std::uint32_t>(shorter.size() - coded_header_size(6));
  std::memcpy(shorter.data() + coded_header_size(6) - 4, &len, 4);
  const Errc e = error_of(shorter);
  CHECK((e == Errc::truncated || e == Errc::corrupt));
  bad = bytes;
  bad[coded_header_size(6) - 8] ^= 0x01;  // a frequency
  CHECK(error_of(bad) == Errc::corrupt);

  SymbolMap wrong = m;
  wrong.symbols[5] = 6;
  CHECK_THROWS_AS(serialize(wrong), Error);
  wrong = m;
  wrong.symbols.pop_back();
  CHECK_THROWS_AS(serialize(wrong), Error);
}

TEST_CASE("payload corruption never yields silent garbage") {
  Rng rng(5);
  SymbolMap m = random_map(rng, 4, 16, 16, 4, false);
  const auto bytes = serialize(m);
  int detected = 0, identical = 0;
  for (std::size_t i = coded_header_size(4); i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x5A;
    try {
      if (deserialize(bad).symbols == m.symbols) ++identical;
    } catch (const Error&) {
      ++detected;
    }
  }
  CHECK(detected + identical > 0);
}

TEST_CASE("measured bpp and symbol order") {
  CHECK(measured_bpp(1000, 224, 224) == doctest::Approx(8000.0 / 50176.0));
  CHECK(measured_bpp(1000, 224, 224) == doctest::Approx(0.1594).epsilon(1e-3));
  CHECK_THROWS_AS(measured_bpp(10, 0, 8), Error);
  std::vector<std::uint8_t> planar{0, 1, 2, 3, 10, 11, 12, 13};  // C=2, 2x2
  auto inter = planar_to_interleaved(planar, 2, 2, 2);
  CHECK(inter == std::vector<std::uint8_t>{0, 10, 1, 11, 2, 12, 3, 13});
  CHECK(interleaved_to_planar(inter, 2, 2, 2) == planar);
}
