#pragma once

// Internals shared by the fedavg/gossip and clustered training drivers. The
// clustered reductions (C=1 and pinned C=K) must reproduce the plain drivers
// byte for byte, so stream tags, aggregation order, and trace metrics live in
// one place.

#include <chrono>
#include <utility>
#include <vector>

#include "decssl/fedsim.hpp"
#include "decssl/rng.hpp"
#include "decssl/types.hpp"

namespace decssl::detail {

constexpr std::uint64_t kInitTag = 0x11A7;
constexpr std::uint64_t kParticipantTag = 0xA5A5;
constexpr std::uint64_t kLocalTag = 0x10CA;
constexpr std::uint64_t kEvalTag = 0xE7A1;
constexpr std::uint64_t kClusterInitTag = 0xC1B5;

inline Rng local_stream(std::uint64_t seed, int source_id, int round_index) {
  return Rng(seed).derive(kLocalTag, static_cast<std::uint64_t>(source_id),
                          static_cast<std::uint64_t>(round_index));
}

inline std::uint64_t eval_seed_for(std::uint64_t seed, int source_id, int round_index) {
  return Rng(seed)
      .derive(kEvalTag, static_cast<std::uint64_t>(source_id),
              static_cast<std::uint64_t>(round_index))
      .seed();
}

void check_sources(const std::vector<LocalDataset>& sources);

const LocalDataset& source_by_id(const std::vector<LocalDataset>& sources, int id);

/// Sum in member order, then scale: the two-member case is bit-identical to
/// a Metropolis complete-graph mix, and a single member passes through exactly.
LinearEncoder average_models(const std::vector<std::pair<int, const LinearEncoder*>>& members,
                             const std::vector<double>* weights);

/// Data-weighted mean of per-source eval losses of one model.
double mixture_loss(const LinearEncoder& model, const std::vector<LocalDataset>& sources,
                    const UpdateOptions& opt, std::uint64_t seed, int round_index);

class StopWatch {
 public:
  StopWatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace decssl::detail
