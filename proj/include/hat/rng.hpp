#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hat {

/// Philox4x32-10 counter-based generator. The 64-bit key is the seed; the
/// 128-bit counter is (stream << 64 | index). Distinct streams never
/// overlap, so replicate r of a run can use stream r regardless of how many
/// numbers other replicates consume.
class Philox {
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox(std::uint64_t seed = 0, std::uint64_t stream = 0) : key_(seed), stream_(stream) {}

    /// Ten rounds of the bijection on one counter block.
    static Block block(std::uint64_t key, const Block& counter);

    result_type operator()();
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();
    /// Skip forward by `n` 32-bit outputs.
    void discard(unsigned long long n);

    std::uint64_t seed() const { return key_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t index_ = 0;  // next counter block
    Block buf_{};
    int pos_ = 4;              // consumed words of buf_
};

/// Stream ids used by the Monte-Carlo driver.
constexpr std::uint64_t kScenarioStream = 0;
inline std::uint64_t replicate_stream(std::uint64_t replicate) { return replicate + 1; }

}  // namespace hat
