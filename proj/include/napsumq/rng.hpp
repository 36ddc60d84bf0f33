#ifndef NAPSUMQ_RNG_HPP
#define NAPSUMQ_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace napsumq {

// Splittable seeding: every pipeline stage derives its own generator from
// (master seed, stream ids). Streams with different id paths are
// independent, and adding more streams never perturbs existing ones.
namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> ids) {
  std::uint64_t state = detail::splitmix64(master);
  for (std::uint64_t id : ids) {
    state = detail::splitmix64(state ^ detail::splitmix64(id + 0x632be59bd9b4e019ULL));
  }
  return state;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(detail::splitmix64(seed));
}

inline std::mt19937_64 make_rng(std::uint64_t master,
                                std::initializer_list<std::uint64_t> ids) {
  return std::mt19937_64(derive_seed(master, ids));
}

}  // namespace napsumq

#endif  // NAPSUMQ_RNG_HPP
