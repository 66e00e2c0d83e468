#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace neurotrace {

// Derives independent generators from one master seed by stream name, so
// e.g. re-seeding data generation does not perturb weight init.
class SeedSplitter {
public:
    explicit SeedSplitter(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t derive(std::string_view stream) const {
        // FNV-1a of the name, mixed with the master seed via splitmix64.
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : stream) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return splitmix(seed_ ^ splitmix(h));
    }

    std::mt19937_64 stream(std::string_view name) const { return std::mt19937_64(derive(name)); }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
};

}  // namespace neurotrace
