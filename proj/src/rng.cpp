#include "otreweight/rng.hpp"

namespace otrw {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(seed)),
                    static_cast<std::uint32_t>(splitmix64(seed) >> 32),
                    static_cast<std::uint32_t>(splitmix64(seed ^ splitmix64(stream + 1))),
                    static_cast<std::uint32_t>(splitmix64(stream) >> 32)};
  return Rng(seq);
}

Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  return make_stream(splitmix64(seed ^ splitmix64(stream)), substream);
}

}  // namespace otrw
