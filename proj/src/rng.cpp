#include "ppgan/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace ppgan {

namespace {
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr unsigned __int128 pcg_multiplier()
{
    return (static_cast<unsigned __int128>(2549297995355413924ULL) << 64) | 4865540595714422341ULL;
}
} // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t basis)
{
    std::uint64_t h = basis;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text)
{
    return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index)
{
    std::array<unsigned char, 16> buf{};
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<unsigned char>(seed >> (8 * i));
        buf[8 + i] = static_cast<unsigned char>(index >> (8 * i));
    }
    return fnv1a64(buf);
}

Pcg64::Pcg64(std::uint64_t seed, std::uint64_t stream)
{
    inc_ = (static_cast<unsigned __int128>(stream) << 1) | 1u;
    state_ = 0;
    next_u64();
    state_ += seed;
    next_u64();
}

std::uint64_t Pcg64::next_u64()
{
    state_ = state_ * pcg_multiplier() + inc_;
    const auto hi = static_cast<std::uint64_t>(state_ >> 64);
    const auto lo = static_cast<std::uint64_t>(state_);
    const unsigned rot = static_cast<unsigned>(state_ >> 122);
    const std::uint64_t x = hi ^ lo;
    return (x >> rot) | (x << ((64 - rot) & 63));
}

double Pcg64::uniform()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Pcg64::below(std::uint64_t bound)
{
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

double Pcg64::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

} // namespace ppgan
