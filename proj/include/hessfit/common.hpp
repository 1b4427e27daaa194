#ifndef HESSFIT_COMMON_HPP
#define HESSFIT_COMMON_HPP

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace hessfit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Point clouds are stored row-major: one point per row, contiguous rows.
using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Counter-based RNG.
//
// Every random draw is a pure function of (key, counter), so sampling is
// deterministic under a seed and safe to evaluate from concurrent chunks.
// Streams are derived as seed ^ stable_hash(module, purpose).
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a, stable across platforms.
constexpr std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t stream_key(std::uint64_t seed, std::string_view module,
                                std::string_view purpose) {
  return seed ^ splitmix64(stable_hash(module) ^ splitmix64(stable_hash(purpose)));
}

struct CounterRng {
  std::uint64_t key = 0;

  std::uint64_t bits(std::uint64_t counter) const {
    return splitmix64(key ^ splitmix64(counter ^ 0x632BE59BD9B4E019ULL));
  }
  // uniform in [0,1)
  double u01(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }
  // standard normal pair via Box-Muller, consuming counters c and c+1
  void normal_pair(std::uint64_t counter, double& n0, double& n1) const;
};

// Derive a child key for a sub-stream indexed by integers.
inline std::uint64_t sub_key(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(key ^ splitmix64(a ^ 0x9E3779B97F4A7C15ULL) ^ (b * 0xD1342543DE82EF95ULL));
}

// Width of the quadratic-fit design matrix and the invertibility threshold on
// the neighbor count (these agree: 1 + 2d + d(d-1)/2 = 1 + d + d(d+1)/2).
inline long design_cols(int d) { return 1 + 2L * d + static_cast<long>(d) * (d - 1) / 2; }
inline long min_neighbors(int d) { return 1 + d + static_cast<long>(d) * (d + 1) / 2; }

// ---------------------------------------------------------------------------
// Small numerics helpers
// ---------------------------------------------------------------------------

// Gauss-Legendre nodes/weights on [-1,1]; cached per n.
const std::vector<double>& gl_nodes(int n);
const std::vector<double>& gl_weights(int n);

// Run fn(i) for i in [0,n) over a small thread pool. Results must be written
// to disjoint slots; iteration order is unspecified.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn,
                  int max_threads = 0);

// Shortest-locale-independent float formatting with 17 significant digits
// (exact double round trip).
std::string format_g17(double x);
double parse_double(std::string_view s);

}  // namespace hessfit

#endif
