#include "ld/random.hpp"

#include "ld/boxdist.hpp"

namespace ld {

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> random_simplex(Rng& rng, std::size_t n, double sharpness) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(n);
  for (double& v : z) v = sharpness * normal(rng);
  return generalized_softmax(z, 1.0);
}

}  // namespace ld
