#include "voxsynth/rng.hpp"

#include <cmath>
#include <numbers>

namespace voxsynth {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t &hi, std::uint32_t &lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

void philox4x32_10(std::uint32_t ctr[4], std::uint32_t k0, std::uint32_t k1) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        const std::uint32_t c0 = hi1 ^ ctr[1] ^ k0;
        const std::uint32_t c1 = lo1;
        const std::uint32_t c2 = hi0 ^ ctr[3] ^ k1;
        const std::uint32_t c3 = lo0;
        ctr[0] = c0;
        ctr[1] = c1;
        ctr[2] = c2;
        ctr[3] = c3;
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t master_seed)
    : RngStream(master_seed, {}, mix64(master_seed ^ 0x5EED5EED5EED5EEDull)) {}

RngStream::RngStream(std::uint64_t master_seed, std::vector<PathElement> path, std::uint64_t key)
    : master_seed_(master_seed), path_(std::move(path)), key_(key) {}

RngStream RngStream::derive(std::string_view tag, std::uint64_t index) const {
    std::uint64_t h = mix64(key_);
    h = mix64(h ^ fnv1a(tag));
    h = mix64(h ^ (index * 0xD1B54A32D192ED03ull + 1));
    auto child_path = path_;
    child_path.push_back({std::string(tag), index});
    return RngStream(master_seed_, std::move(child_path), h);
}

std::string RngStream::path_string() const {
    std::string s = std::to_string(master_seed_);
    for (const auto &e : path_) {
        s += '/';
        s += e.tag;
        s += ':';
        s += std::to_string(e.index);
    }
    return s;
}

void RngStream::refill() {
    block_[0] = static_cast<std::uint32_t>(counter_);
    block_[1] = static_cast<std::uint32_t>(counter_ >> 32);
    block_[2] = 0;
    block_[3] = 0;
    philox4x32_10(block_, static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32));
    ++counter_;
    used_ = 0;
}

std::uint32_t RngStream::next_u32() {
    if (used_ >= 4) refill();
    return block_[used_++];
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) {
    if (hi == lo) {
        // Still consume a draw so collapsing a range does not shift later draws.
        (void)next_u64();
        return lo;
    }
    return lo + (hi - lo) * uniform();
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) std::swap(lo, hi);
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());
    // Lemire's nearly-divisionless rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * range;
    std::uint64_t l = static_cast<std::uint64_t>(m);
    if (l < range) {
        const std::uint64_t t = (0 - range) % range;
        while (l < t) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * range;
            l = static_cast<std::uint64_t>(m);
        }
    }
    return lo + static_cast<std::int64_t>(m >> 64);
}

double RngStream::normal() {
    if (has_spare_normal_) {
        has_spare_normal_ = false;
        return spare_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(theta);
    has_spare_normal_ = true;
    return r * std::cos(theta);
}

}  // namespace voxsynth
