#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedfnn {

// splitmix64 finalizer; decorrelates nearby seed values.
inline std::uint64_t mix_bits(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic seed chain: derive_seed(base, {tag, index, ...}) gives every
// client/round/epoch/fold its own independent stream while staying fully
// reproducible from the experiment seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix_bits(base);
    for (std::uint64_t p : path) s = mix_bits(s ^ mix_bits(p));
    return s;
}

// Fixed tags for the seed chain so call sites cannot collide by accident.
namespace seed_tag {
enum : std::uint64_t {
    bank_init = 0x101,
    activation_init = 0x102,
    spawn = 0x103,
    local_train = 0x104,
    noise = 0x201,
    folds = 0x202,
    proportions = 0x203,
    train_split = 0x204,
    test_split = 0x205,
    repeat = 0x301,
    fold = 0x302,
};
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace fedfnn
