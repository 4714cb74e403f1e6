#pragma once

#include <cmath>
#include <cstdint>

namespace mfg {

enum class NoiseRole : std::uint64_t { idio = 0, theta = 1, common = 2 };

// Counter-based reproducible Gaussian stream.  Every increment is addressed by
// (seed, path, lane, step, role); the same address always yields the same
// value, independent of evaluation order or thread count.  Lanes are flat
// particle*dim + component indices; values are produced in Box-Muller pairs
// hashed from consecutive lane pairs.
struct NoiseBank {
  std::uint64_t seed = 0;

  static std::uint64_t splitmix(std::uint64_t& s) {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Both values of the Box-Muller pair addressed by lane_pair = lane >> 1:
  // even lane (cos branch) in z0, odd lane in z1.
  void gaussian_pair(std::uint64_t path, std::uint64_t lane_pair, std::uint64_t step,
                     NoiseRole role, double& z0, double& z1) const {
    std::uint64_t s = seed;
    (void)splitmix(s);
    s ^= 0x8f1bbcdcbfa53e0bull * (static_cast<std::uint64_t>(role) + 1);
    s ^= splitmix(s) ^ (path * 0xd1342543de82ef95ull);
    s ^= splitmix(s) ^ (step * 0x2545f4914f6cdd1dull);
    s ^= splitmix(s) ^ (lane_pair * 0x9e6c63d0a6c5e8f7ull);
    std::uint64_t a = splitmix(s);
    std::uint64_t b = splitmix(s);
    double u1 = 1.0 - static_cast<double>(a >> 11) * 0x1.0p-53;  // (0, 1]
    double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;        // [0, 1)
    double r = std::sqrt(-2.0 * std::log(u1));
    double ang = 6.283185307179586476925286766559 * u2;
    z0 = r * std::cos(ang);
    z1 = r * std::sin(ang);
  }

  double gaussian(std::uint64_t path, std::uint64_t lane, std::uint64_t step,
                  NoiseRole role) const {
    double z0, z1;
    gaussian_pair(path, lane >> 1, step, role, z0, z1);
    return (lane & 1ull) ? z1 : z0;
  }

  // Fills out[0..count) with the values of consecutive lanes starting at
  // lane0, identical to per-lane gaussian() calls but sharing each pair's
  // hash and transform.
  void gaussian_fill(std::uint64_t path, std::uint64_t lane0, std::uint64_t step, NoiseRole role,
                     double* out, std::uint64_t count) const {
    std::uint64_t lane = lane0;
    const std::uint64_t end = lane0 + count;
    std::uint64_t i = 0;
    if (lane < end && (lane & 1ull)) {
      out[i++] = gaussian(path, lane, step, role);
      ++lane;
    }
    for (; lane + 1 < end; lane += 2) {
      gaussian_pair(path, lane >> 1, step, role, out[i], out[i + 1]);
      i += 2;
    }
    if (lane < end) out[i] = gaussian(path, lane, step, role);
  }
};

}  // namespace mfg
