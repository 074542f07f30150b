#include "ld/regions.hpp"

#include <algorithm>
#include <stdexcept>

namespace ld {

std::size_t RegionMasks::main_count() const {
  return static_cast<std::size_t>(std::count(main.begin(), main.end(), true));
}

std::size_t RegionMasks::vlr_count() const {
  return static_cast<std::size_t>(std::count(vlr.begin(), vlr.end(), true));
}

void RegionMasks::validate() const {
  if (main.size() != vlr.size()) throw std::invalid_argument("RegionMasks: length mismatch");
  for (std::size_t i = 0; i < main.size(); ++i) {
    if (main[i] && vlr[i]) {
      throw std::invalid_argument("RegionMasks: anchor in both main and VLR regions");
    }
  }
}

std::vector<bool> assign_main(const std::vector<BoundingBox>& anchors,
                              const std::vector<BoundingBox>& gts, double alpha_pos) {
  if (anchors.empty()) throw std::invalid_argument("assign_main: no anchors");
  std::vector<bool> mask(anchors.size(), false);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (const auto& g : gts) {
      if (iou(anchors[i], g) >= alpha_pos) {
        mask[i] = true;
        break;
      }
    }
  }
  return mask;
}

std::vector<bool> assign_vlr(const std::vector<BoundingBox>& anchors,
                             const std::vector<BoundingBox>& gts, double alpha_pos,
                             double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("assign_vlr: gamma must lie in [0, 1]");
  }
  const auto main = assign_main(anchors, gts, alpha_pos);
  std::vector<bool> mask(anchors.size(), false);
  if (gts.empty()) return mask;

  const double lower = gamma * alpha_pos;
  const DiouMatrix x = diou_matrix(anchors, gts);
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (main[i]) continue;
    for (std::size_t j = 0; j < x.cols; ++j) {
      if (x(i, j) >= lower && x(i, j) <= alpha_pos) {
        mask[i] = true;
        break;
      }
    }
  }
  return mask;
}

RegionMasks assign_regions(const std::vector<BoundingBox>& anchors,
                           const std::vector<BoundingBox>& gts, double alpha_pos,
                           double gamma) {
  return {assign_main(anchors, gts, alpha_pos), assign_vlr(anchors, gts, alpha_pos, gamma)};
}

UnfoldedAnchors unfold_anchors(const std::vector<std::vector<BoundingBox>>& per_location,
                               std::span<const int> levels) {
  if (per_location.empty()) throw std::invalid_argument("unfold_anchors: no locations");
  if (!levels.empty() && levels.size() != per_location.size()) {
    throw std::invalid_argument("unfold_anchors: one level per location required");
  }
  const std::size_t per = per_location.front().size();
  if (per == 0) throw std::invalid_argument("unfold_anchors: location without anchors");

  UnfoldedAnchors out;
  out.location_count = per_location.size();
  out.anchors.reserve(per * per_location.size());
  for (std::size_t loc = 0; loc < per_location.size(); ++loc) {
    if (per_location[loc].size() != per) {
      throw std::invalid_argument("unfold_anchors: inconsistent anchor count per location");
    }
    for (const auto& a : per_location[loc]) {
      out.anchors.push_back(a);
      out.location.push_back(loc);
      out.level.push_back(levels.empty() ? 0 : levels[loc]);
    }
  }
  return out;
}

std::vector<bool> fold_mask(const UnfoldedAnchors& unfolded, const std::vector<bool>& flat) {
  if (flat.size() != unfolded.anchors.size()) {
    throw std::invalid_argument("fold_mask: mask length does not match anchor count");
  }
  std::vector<bool> folded(unfolded.location_count, false);
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (flat[k]) folded[unfolded.location[k]] = true;
  }
  return folded;
}

}  // namespace ld
