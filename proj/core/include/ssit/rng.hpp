#pragma once

#include <cstdint>
#include <string_view>

namespace ssit {

// Counter-based generator: a value stream is fully determined by
// (seed, step, site), so resuming training at step k replays exactly the
// draws an uninterrupted run would have made. Sites name independent streams
// (style sampling per domain, weight init per parameter, ...).
class CounterRng {
 public:
  static CounterRng keyed(uint64_t seed, uint64_t step, uint64_t site);

  uint64_t next_u64();
  double uniform01();  // [0, 1)
  double normal();     // standard normal, Box-Muller

 private:
  explicit CounterRng(uint64_t key) : key_(key) {}
  uint64_t key_;
  uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

uint64_t mix64(uint64_t x);                 // splitmix64 finalizer
uint64_t site_id(std::string_view name);    // FNV-1a of a site name

// fixed site ids used by the trainer
namespace rng_site {
inline constexpr uint64_t style_prior_domain1 = 1;
inline constexpr uint64_t style_prior_domain2 = 2;
inline constexpr uint64_t translate_style = 3;
inline constexpr uint64_t diagnostics_domain1 = 4;
inline constexpr uint64_t diagnostics_domain2 = 5;
}  // namespace rng_site

}  // namespace ssit
