#pragma once

#include <cstdint>
#include <random>

namespace otrw {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream...). Streams are derived by hashing
// so that replicate i sees the same draws whatever order replicates run in.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);
Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream);

}  // namespace otrw
