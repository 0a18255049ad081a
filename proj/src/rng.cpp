#include "uln/rng.hpp"

#include <array>

namespace uln {

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RngSeed RngSeed::substream(std::uint64_t index) const noexcept {
  std::uint64_t state = stream ^ 0x6a09e667f3bcc909ULL;
  std::uint64_t mixed = splitmix64(state);
  state = mixed + index;
  return RngSeed{seed, splitmix64(state)};
}

namespace {

std::seed_seq make_seed_seq(RngSeed s) {
  std::uint64_t state = s.seed;
  std::uint64_t stream_state = s.stream ^ 0xd1b54a32d192ed03ULL;
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < words.size(); i += 2) {
    const std::uint64_t w = splitmix64(state) ^ splitmix64(stream_state);
    words[i] = static_cast<std::uint32_t>(w);
    words[i + 1] = static_cast<std::uint32_t>(w >> 32);
  }
  return std::seed_seq(words.begin(), words.end());
}

}  // namespace

Rng::Rng(RngSeed seed) {
  auto seq = make_seed_seq(seed);
  engine_.seed(seq);
}

}  // namespace uln
