#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <random>
#include <string_view>

namespace mortcast {

/// Name of the normal-variate generator recorded in forecast metadata.
/// mt19937_64 uniforms mapped to (0,1), transformed by Box-Muller; both
/// steps are fully specified, so equal seeds give equal streams on any
/// conforming platform.
inline constexpr std::string_view kNormalGeneratorName = "mt19937_64-boxmuller-v1";

/// splitmix64 finalizer; bijective 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a over bytes, for folding string labels into seeds.
inline std::uint64_t hash_bytes(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives a child seed from a base seed and a sequence of labels.
/// Used so every (country, sex, model, strategy, origin) cell draws an
/// independent, order-insensitive stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = mix64(base);
    for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
    return h;
}

/// Source of standard normal variates.
class NormalSource {
  public:
    virtual ~NormalSource() = default;
    virtual double next() = 0;
};

/// Deterministic N(0,1) stream: Box-Muller over mt19937_64 uniforms.
class BoxMullerStream final : public NormalSource {
  public:
    explicit BoxMullerStream(std::uint64_t seed) : engine_(seed) {}

    double next() override {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    double uniform01() {
        // 53-bit mantissa in [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace mortcast
