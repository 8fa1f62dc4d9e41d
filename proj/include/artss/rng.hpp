#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace artss {

// 64-bit FNV-1a; stable across platforms, used to turn component names into
// stream ids.
std::uint64_t fnv1a64(std::string_view text);

// Seed for a named random stream under a master seed. Every consumer of
// randomness derives its own stream this way so that adding draws in one
// component never perturbs another.
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);
std::uint64_t derive_seed(std::uint64_t master, std::string_view component, std::uint64_t index);

// Portable random source. std::mt19937_64 output is fully specified by the
// standard; the distribution code below is ours because the standard library
// distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    std::size_t uniform_index(std::size_t n);  // [0, n), n > 0
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct indices from [0, n), in ascending order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace artss
