#pragma once

#include <cstdint>

#include "boxprune/masks.hpp"
#include "boxprune/netspec.hpp"

namespace boxprune {

struct InputShape {
  int h = 32, w = 32, c = 3;
};

// Plain conv stack with the same channel count in every conv, relu after
// each, a 2x maxpool after every second conv, then a flattened dense head.
// The dense rows inherit the last conv's flag, replicated over the final
// spatial extent. `n_convs` must be even so pooling lands on even extents.
NetworkSpec build_convnet(int n_convs, int channels, int num_classes, InputShape in);

// The 6-conv cylinder network; 6 prune flags.
NetworkSpec build_cnet(int channels, int num_classes, InputShape in = {});

// 20-layer residual net, three blocks of three building blocks with
// channels (w, 2w, 8w) and stride-2 block entries. Projection shortcuts in
// each block's first building block inherit (incoming flag, block-out
// flag); the other building blocks' closing convs reuse the block-out
// flag. 13 actively prunable flags.
NetworkSpec build_resnet20(int width, int num_classes, InputShape in = {});

// Desk-scale variants used throughout the tests.
NetworkSpec cnet_small(int num_classes = 4, InputShape in = {8, 8, 1});
NetworkSpec resnet20_4(int num_classes = 4, InputShape in = {8, 8, 1});

NetworkSpec build_arch(const std::string& arch, int num_classes, InputShape in);

// Exact parameter count of the (masked) network: conv kernels plus dense
// weights and biases. Batchnorm parameters are excluded from compression
// accounting, so every architecture's factor is comparable.
int64_t param_count(const NetworkSpec& spec, const MaskSet* masks = nullptr);

// Same count from per-flag retained-channel totals (profile-level CF).
int64_t param_count_from_retained(const NetworkSpec& spec,
                                  const std::vector<int>& retained);

}  // namespace boxprune
