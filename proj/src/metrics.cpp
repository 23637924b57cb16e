#include "boxprune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace boxprune {

std::vector<real> l1_scores(const Tensor& conv_weight) {
  if (conv_weight.rank() != 4) {
    throw ShapeError("l1_scores: rank-4 conv weight required");
  }
  const int co = conv_weight.dim(3);
  std::vector<real> scores(size_t(co), 0);
  const real* d = conv_weight.data();
  for (int64_t i = 0; i < conv_weight.numel(); i += co) {
    for (int j = 0; j < co; ++j) scores[size_t(j)] += std::abs(d[i + j]);
  }
  return scores;
}

std::vector<ChannelScores> taylor_scores(const Net& net, const LabeledData& val,
                                         int batch_size) {
  if (val.size() == 0) throw ConfigError("taylor_scores: empty validation split");
  const NetworkSpec& spec = net.spec;
  std::vector<ChannelScores> out(size_t(spec.flag_count()));
  for (int f = 0; f < spec.flag_count(); ++f) {
    out[size_t(f)] = {f, "taylor",
                      std::vector<real>(size_t(spec.flags[size_t(f)].length), 0)};
  }

  Tape tape(spec);
  WeightMap weights = net.weights;
  std::vector<int> order(size_t(val.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int start = 0; start < val.size(); start += batch_size) {
    const int count = std::min(batch_size, val.size() - start);
    const Batch batch = gather_batch(val, order, start, count);
    tape.forward(weights, batch, Mode::Eval);
    // Seed with the batch size: per-sample loss gradients, so one batch of
    // N and N batches of 1 accumulate identical sums.
    tape.backward(real(count));

    for (int f = 0; f < spec.flag_count(); ++f) {
      const int layer = spec.flags[size_t(f)].decision_layer;
      if (layer < 0) throw UsageError("taylor_scores: flag without decision layer");
      const Tensor& act = tape.activation(layer);
      const Tensor& grad = tape.activation_grad(layer);
      const int c = act.dim(3);
      const int64_t spatial = int64_t(act.dim(1)) * act.dim(2);
      auto& scores = out[size_t(f)].scores;
      for (int n = 0; n < count; ++n) {
        for (int j = 0; j < c; ++j) {
          real acc = 0;
          const int64_t base = int64_t(n) * spatial * c + j;
          for (int64_t s = 0; s < spatial; ++s) {
            const int64_t idx = base + s * c;
            acc += std::abs(grad[idx] * act[idx]);
          }
          scores[size_t(j)] += acc / real(spatial);
        }
      }
    }
  }
  for (auto& cs : out) {
    for (auto& s : cs.scores) s /= real(val.size());
  }
  return out;
}

std::vector<uint8_t> select_channels(const std::vector<real>* scores, int channels,
                                     int keep_count, SelectStrategy strategy,
                                     Rng& rng, TieBreak tie) {
  if (keep_count < 1 || keep_count > channels) {
    throw ConfigError("select_channels: keep_count " + std::to_string(keep_count) +
                      " out of range [1," + std::to_string(channels) + "]");
  }
  std::vector<uint8_t> mask(size_t(channels), 0);
  if (strategy == SelectStrategy::Random) {
    for (int idx : rng.sample_indices(channels, keep_count)) mask[size_t(idx)] = 1;
    return mask;
  }
  if (!scores || int(scores->size()) != channels) {
    throw ConfigError("select_channels: top-metric needs one score per channel");
  }
  std::vector<int> order(size_t(channels), 0);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> jitter;
  if (tie == TieBreak::SeededRandom) {
    jitter.resize(size_t(channels));
    for (auto& j : jitter) j = rng.uniform();
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const real sa = (*scores)[size_t(a)], sb = (*scores)[size_t(b)];
    if (sa != sb) return sa > sb;
    if (tie == TieBreak::SeededRandom) return jitter[size_t(a)] < jitter[size_t(b)];
    return a < b;
  });
  for (int i = 0; i < keep_count; ++i) mask[size_t(order[size_t(i)])] = 1;
  return mask;
}

void write_scores_csv(const std::string& path,
                      const std::vector<ChannelScores>& scores) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scores csv: " + path);
  out << "# boxprune-scores v1\n";
  out << "flag,channel,metric,score\n";
  out.precision(17);
  for (const auto& cs : scores) {
    for (size_t j = 0; j < cs.scores.size(); ++j) {
      out << cs.flag << "," << j << "," << cs.metric << "," << cs.scores[j] << "\n";
    }
  }
}

}  // namespace boxprune
