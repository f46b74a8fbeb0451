#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dipli/error.hpp"
#include "dipli/flow.hpp"
#include "dipli/image.hpp"
#include "dipli/metrics.hpp"

namespace dipli {

struct FrameStack {
  std::vector<Image> frames;

  void validate() const {
    require(!frames.empty(), ErrorCode::EmptyStack, "no frames");
    for (size_t k = 1; k < frames.size(); ++k)
      require(frames[k].same_shape(frames[0]), ErrorCode::ShapeMismatch,
              "frame " + std::to_string(k) + " shape differs");
  }

  std::vector<double> quality_scores() const {
    std::vector<double> scores;
    scores.reserve(frames.size());
    for (const Image& f : frames) scores.push_back(laplacian_energy(f));
    return scores;
  }
};

// Frame with the highest Laplacian energy; ties go to the lowest index.
inline int select_pivot(const FrameStack& stack) {
  stack.validate();
  const auto scores = stack.quality_scores();
  int best = 0;
  for (size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = static_cast<int>(k);
  return best;
}

struct LuckyResult {
  Image restored;
  int pivot = 0;
  std::vector<double> quality;  // laplacian energy per frame
  std::vector<bool> kept;
};

// Classic lucky imaging: pick the sharpest frame as pivot, optionally keep
// only the top fraction by sharpness (pivot always kept), warp every kept
// frame onto the pivot geometry with TV-L1, and average.
inline LuckyResult lucky_imaging(const FrameStack& stack,
                                 double select_frac = 1.0,
                                 const TvL1Params& flow_params = {}) {
  stack.validate();
  require(select_frac > 0.0 && select_frac <= 1.0, ErrorCode::InvalidConfig,
          "select_frac in (0,1]");
  const int count = static_cast<int>(stack.frames.size());

  LuckyResult result;
  result.quality = stack.quality_scores();
  result.pivot = select_pivot(stack);
  result.kept.assign(count, false);

  const int keep = std::min(
      count, static_cast<int>(std::ceil(select_frac * count)));
  std::vector<int> order(count);
  for (int k = 0; k < count; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return result.quality[a] > result.quality[b];
  });
  for (int i = 0; i < keep; ++i) result.kept[order[i]] = true;
  result.kept[result.pivot] = true;

  const Image& pivot_frame = stack.frames[result.pivot];
  Image acc(pivot_frame.channels, pivot_frame.height, pivot_frame.width);
  int used = 0;
  for (int k = 0; k < count; ++k) {
    if (!result.kept[k]) continue;
    Image aligned =
        k == result.pivot
            ? stack.frames[k]
            : warp_bilinear(stack.frames[k],
                            estimate_flow_tvl1(stack.frames[k], pivot_frame,
                                               flow_params));
    for (size_t i = 0; i < acc.size(); ++i) acc.data[i] += aligned.data[i];
    ++used;
  }
  for (double& v : acc.data) v /= static_cast<double>(used);
  result.restored = std::move(acc);
  return result;
}

}  // namespace dipli
