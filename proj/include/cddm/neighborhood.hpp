#ifndef CDDM_NEIGHBORHOOD_HPP_
#define CDDM_NEIGHBORHOOD_HPP_

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cddm/dataset.hpp"
#include "cddm/error.hpp"

namespace cddm {

// Exact Euclidean k-nearest-neighbor search over a dataset's inputs by
// exhaustive scan. Ties are broken by ascending sample index.
class NeighborIndex {
 public:
  explicit NeighborIndex(Dataset data) : data_(std::move(data)) {}

  const Dataset& data() const noexcept { return data_; }

  // The k samples closest to sample `anchor`, nearest first, never including
  // the anchor itself.
  std::vector<std::size_t> knn(std::size_t anchor, std::size_t k) const {
    const std::size_t n = data_.size();
    if (anchor >= n) throw ConfigError("knn: anchor index " + std::to_string(anchor) + " out of range");
    if (k < 1 || k >= n) {
      throw ConfigError("knn: k=" + std::to_string(k) + " must satisfy 1 <= k <= N-1 with N=" +
                        std::to_string(n));
    }
    const auto& x = data_.inputs();
    const auto a = static_cast<Eigen::Index>(anchor);

    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(n - 1);
    for (Eigen::Index l = 0; l < x.rows(); ++l) {
      if (l == a) continue;
      dist.emplace_back((x.row(l) - x.row(a)).squaredNorm(), static_cast<std::size_t>(l));
    }
    const auto kth = dist.begin() + static_cast<std::ptrdiff_t>(k);
    std::nth_element(dist.begin(), kth - 1, dist.end());
    std::sort(dist.begin(), kth);

    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
    return out;
  }

  // The anchor followed by its k nearest neighbors (k' = k + 1 indices).
  std::vector<std::size_t> neighborhood(std::size_t anchor, std::size_t k) const {
    auto nn = knn(anchor, k);
    nn.insert(nn.begin(), anchor);
    return nn;
  }

 private:
  Dataset data_;
};

}  // namespace cddm

#endif  // CDDM_NEIGHBORHOOD_HPP_
