#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ld/geometry.hpp"

namespace ld {

/// Per-anchor distillation masks. An anchor is never in both regions.
struct RegionMasks {
  std::vector<bool> main;
  std::vector<bool> vlr;

  std::size_t size() const { return main.size(); }
  std::size_t main_count() const;
  std::size_t vlr_count() const;

  /// Throws std::invalid_argument on length mismatch or overlapping members.
  void validate() const;
};

/// Main region: max_j IoU(anchor, gt_j) >= alpha_pos. No gts gives an all-false mask.
std::vector<bool> assign_main(const std::vector<BoundingBox>& anchors,
                              const std::vector<BoundingBox>& gts, double alpha_pos);

/// Valuable localization region: some gt has gamma * alpha_pos <= DIoU <= alpha_pos,
/// excluding anchors already in the main region.
std::vector<bool> assign_vlr(const std::vector<BoundingBox>& anchors,
                             const std::vector<BoundingBox>& gts, double alpha_pos,
                             double gamma);

RegionMasks assign_regions(const std::vector<BoundingBox>& anchors,
                           const std::vector<BoundingBox>& gts, double alpha_pos,
                           double gamma);

/// Anchors flattened location-major, with the location and pyramid level each
/// one came from.
struct UnfoldedAnchors {
  std::vector<BoundingBox> anchors;
  std::vector<std::size_t> location;
  std::vector<int> level;
  std::size_t location_count = 0;
};

/// Every location must carry the same non-zero number of anchors. `levels`, if
/// given, has one entry per location and is only carried along for reporting.
UnfoldedAnchors unfold_anchors(const std::vector<std::vector<BoundingBox>>& per_location,
                               std::span<const int> levels = {});

/// A location is set if any of its anchors is set.
std::vector<bool> fold_mask(const UnfoldedAnchors& unfolded, const std::vector<bool>& flat);

}  // namespace ld
