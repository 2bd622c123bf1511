#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace voxsynth {

// Hierarchical counter-based random stream.
//
// A stream is identified by (master_seed, path). Its 64-bit key is a hash of
// that identity and the draws are Philox4x32-10 blocks of an incrementing
// counter under that key. Deriving a child never advances the parent, so the
// bits a worker sees depend only on the path it was handed, not on
// scheduling.
class RngStream {
  public:
    struct PathElement {
        std::string tag;
        std::uint64_t index;
        bool operator==(const PathElement &) const = default;
    };

    explicit RngStream(std::uint64_t master_seed);

    RngStream derive(std::string_view tag, std::uint64_t index) const;

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    const std::vector<PathElement> &path() const noexcept { return path_; }
    std::uint64_t key() const noexcept { return key_; }
    // e.g. "7/sample:3/labels:0"
    std::string path_string() const;

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // [0,1) with 53 random bits.
    double uniform();
    // [lo,hi); returns lo when the range is a point.
    double uniform(double lo, double hi);
    // Inclusive on both ends, unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

  private:
    RngStream(std::uint64_t master_seed, std::vector<PathElement> path, std::uint64_t key);
    void refill();

    std::uint64_t master_seed_;
    std::vector<PathElement> path_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::uint32_t block_[4] = {0, 0, 0, 0};
    int used_ = 4;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

// splitmix64 finaliser, exposed for hashing small identities.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace voxsynth
