#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace santa {

// Semantic labels for RNG stream paths. Streams are keyed by what a draw
// belongs to (experiment, head, tile, ...), never by which thread runs it.
enum class Domain : std::uint32_t {
  kExperiment = 1,
  kPrompt,
  kLayer,
  kHead,
  kTile,
  kStratum,
  kReplicate,
  kTrial,
  kQuery,
  kFeature,
  kScoreStage,
  kValueStage,
  kWorker,
  kIteration,
  kEpisode,
  kReward,
  kProblem,
  kBudget,
  kBootstrap,
  kMatrix,
};

const char* to_string(Domain domain);

struct PathElement {
  Domain domain;
  std::uint64_t index;
};

// Philox4x32-10 block function. Exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// SplitMix64 finalizer; used to derive child keys from (parent, label).
std::uint64_t mix64(std::uint64_t x);

/// Counter-based, splittable random stream.
///
/// The stream identity is (root_seed, path). Draw n of a stream is a pure
/// function of that identity and n, so results do not depend on the order
/// in which independent streams are consumed or on the thread that
/// consumes them. `child()` derives a new stream identity without touching
/// the parent's position.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t root_seed);

  RngStream child(Domain domain, std::uint64_t index) const;

  // Next 64 random bits.
  std::uint64_t operator()();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Standard normal (Box-Muller on two uniforms; portable across stdlibs).
  double normal();
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  std::uint64_t root_seed() const { return root_seed_; }
  const std::vector<PathElement>& path() const { return path_; }
  // Number of 64-bit words consumed so far.
  std::uint64_t position() const { return position_; }
  std::string describe() const;

 private:
  RngStream(std::uint64_t root_seed, std::vector<PathElement> path,
            std::uint64_t key, std::uint64_t salt);

  std::uint64_t root_seed_;
  std::vector<PathElement> path_;
  std::uint64_t key_;
  std::uint64_t salt_;
  std::uint64_t position_ = 0;
  std::uint64_t spare_ = 0;
};

}  // namespace santa
