#pragma once

#include "vidret/model.hpp"

namespace vidret {

struct ModelStats {
  std::size_t parameters = 0;
  /// Parameter count per top-level group ("text", "preview", "intensive",
  /// "hybrid.preview", "hybrid.intensive").
  std::vector<std::pair<std::string, std::size_t>> groups;
  /// Multiply-accumulates to score one video-text pair.
  std::uint64_t macs = 0;
  std::vector<std::pair<std::string, std::uint64_t>> mac_breakdown;
  int frames = 0;
  int words = 0;
};

/// Exact trainable-parameter count and an analytic multiply-accumulate
/// estimate for a video of `frames` frames and a sentence of `words` words.
ModelStats model_stats(const Model& model, int frames = 20, int words = 10);

}  // namespace vidret
