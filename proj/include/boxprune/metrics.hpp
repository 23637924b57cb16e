#pragma once

#include <string>
#include <vector>

#include "boxprune/train.hpp"

namespace boxprune {

struct ChannelScores {
  int flag = -1;
  std::string metric;  // "l1" or "taylor"
  std::vector<real> scores;
};

// Per output channel, sum of |w| over kernel and input-channel dims.
std::vector<real> l1_scores(const Tensor& conv_weight);

// First-order estimate of each channel's contribution to the loss:
// mean over spatial positions of |grad * activation| per sample, then
// averaged over samples. Gradients are rescaled to per-sample scale so the
// result does not depend on how the data is batched. Runs eval-mode
// forward/backward over the validation split.
std::vector<ChannelScores> taylor_scores(const Net& net, const LabeledData& val,
                                         int batch_size = 64);

enum class SelectStrategy { Random, TopMetric };
enum class TieBreak { LowestIndex, SeededRandom };

// Exactly keep_count ones. TopMetric keeps the highest scores; ties go to
// the lowest channel index unless a seeded-random tie-break is requested.
std::vector<uint8_t> select_channels(const std::vector<real>* scores, int channels,
                                     int keep_count, SelectStrategy strategy,
                                     Rng& rng, TieBreak tie = TieBreak::LowestIndex);

void write_scores_csv(const std::string& path,
                      const std::vector<ChannelScores>& scores);

}  // namespace boxprune
