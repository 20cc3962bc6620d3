#pragma once

#include <cstdint>
#include <random>

namespace rfl {

/// What a random stream is used for. Part of the stream key, so two purposes
/// never share draws even for the same node and round.
enum class Purpose : std::uint64_t {
  downlink = 1,
  uplink = 2,
  center = 3,
  shared_sample = 4,
  partition = 5,
  synthetic = 6,
  subsample = 7,
  probe = 8,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t node, std::uint64_t round,
                                    Purpose purpose) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ node);
  h = splitmix64(h ^ round);
  return h;
}

/// Random stream keyed by (master seed, node, round, purpose). Constructing the
/// same key twice replays the same draws, independent of what other streams
/// were used in between.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t node, std::uint64_t round, Purpose purpose)
      : master_seed_(master_seed),
        node_(node),
        round_(round),
        purpose_(purpose),
        engine_(derive_seed(master_seed, node, round, purpose)) {}

  std::mt19937_64& engine() { return engine_; }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t node() const { return node_; }
  std::uint64_t round() const { return round_; }
  Purpose purpose() const { return purpose_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t node_;
  std::uint64_t round_;
  Purpose purpose_;
  std::mt19937_64 engine_;
};

}  // namespace rfl
