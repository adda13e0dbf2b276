#include "dcic/rng.hpp"

#include <cmath>

namespace dcic {

namespace {

std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

float Rng::normal() {
  double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  double u2 = static_cast<double>(next() >> 11) * 0x1.0p-53;
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2));
}

Rng Rng::stream(std::uint64_t seed, std::string_view name) { return Rng(mix(seed) ^ hash_name(name)); }

Rng Rng::indexed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return Rng(mix(mix(seed) ^ hash_name(name)) + mix(index));
}

}  // namespace dcic
