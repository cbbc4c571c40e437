#include "santa/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

namespace santa {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kSaltTweak = 0xD1B54A32D192ED03ull;

inline std::uint32_t lo32(std::uint64_t x) { return static_cast<std::uint32_t>(x); }
inline std::uint32_t hi32(std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); }

}  // namespace

const char* to_string(Domain domain) {
  switch (domain) {
    case Domain::kExperiment: return "experiment";
    case Domain::kPrompt: return "prompt";
    case Domain::kLayer: return "layer";
    case Domain::kHead: return "head";
    case Domain::kTile: return "tile";
    case Domain::kStratum: return "stratum";
    case Domain::kReplicate: return "replicate";
    case Domain::kTrial: return "trial";
    case Domain::kQuery: return "query";
    case Domain::kFeature: return "feature";
    case Domain::kScoreStage: return "score-stage";
    case Domain::kValueStage: return "value-stage";
    case Domain::kWorker: return "worker";
    case Domain::kIteration: return "iteration";
    case Domain::kEpisode: return "episode";
    case Domain::kReward: return "reward";
    case Domain::kProblem: return "problem";
    case Domain::kBudget: return "budget";
    case Domain::kBootstrap: return "bootstrap";
    case Domain::kMatrix: return "matrix";
  }
  return "unknown";
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    ctr = {hi32(p1) ^ ctr[1] ^ key[0], lo32(p1), hi32(p0) ^ ctr[3] ^ key[1],
           lo32(p0)};
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t root_seed)
    : RngStream(root_seed, {}, mix64(root_seed), mix64(root_seed ^ kSaltTweak)) {}

RngStream::RngStream(std::uint64_t root_seed, std::vector<PathElement> path,
                     std::uint64_t key, std::uint64_t salt)
    : root_seed_(root_seed), path_(std::move(path)), key_(key), salt_(salt) {}

RngStream RngStream::child(Domain domain, std::uint64_t index) const {
  const std::uint64_t label =
      mix64((static_cast<std::uint64_t>(domain) << 56) ^ mix64(index));
  std::vector<PathElement> path = path_;
  path.push_back({domain, index});
  return RngStream(root_seed_, std::move(path), mix64(key_ ^ label),
                   mix64(salt_ + kSaltTweak * (label | 1)));
}

std::uint64_t RngStream::operator()() {
  const std::uint64_t word = position_++;
  if (word & 1u) return spare_;
  const std::uint64_t block = word >> 1;
  const auto out = philox4x32({lo32(block), hi32(block), lo32(salt_), hi32(salt_)},
                              {lo32(key_), hi32(key_)});
  spare_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

double RngStream::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: empty range");
  // Rejection on the top of the range keeps the draw exactly uniform.
  const std::uint64_t limit = max() - (max() % n);
  for (;;) {
    const std::uint64_t x = (*this)();
    if (x < limit) return x % n;
  }
}

std::string RngStream::describe() const {
  std::string out = fmt::format("seed={}", root_seed_);
  for (const auto& e : path_) out += fmt::format("/{}={}", to_string(e.domain), e.index);
  return out;
}

}  // namespace santa
