#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace ppgan {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

/// Seed for the i-th item of a stream: FNV-1a over the little-endian bytes of (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// PCG64 (XSL-RR 128/64). All randomness in the project goes through this
/// generator; the normal sampler is Box-Muller so draws are reproducible
/// independent of the standard library implementation.
class Pcg64 {
public:
    explicit Pcg64(std::uint64_t seed, std::uint64_t stream = 0x5851f42d4c957f2dULL);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);
    double normal();

private:
    unsigned __int128 state_ = 0;
    unsigned __int128 inc_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace ppgan
