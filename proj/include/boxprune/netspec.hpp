#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "boxprune/common.hpp"

namespace boxprune {

enum class LayerKind {
  Input,
  Conv,
  BatchNorm,
  Relu,
  MaxPool,
  Flatten,
  Dense,
  Add,
};

const char* layer_kind_name(LayerKind k);

struct LayerRecord {
  LayerKind kind = LayerKind::Input;
  std::string name;
  int input = -1;     // producing layer index
  int shortcut = -1;  // second operand, Add only
  int kernel = 0;     // conv: kernel extent (square); maxpool fixed 2
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  int in_flag = -1;   // conv dim 3 / dense rows
  int out_flag = -1;  // conv dim 4 / batchnorm channels
  int replicate = 1;  // dense rows per channel (flatten spatial size)
  std::string block;  // residual block label, for error messages
};

// One prune flag: how long its retain vector is, which layer's output it
// was decided at, and every weight-tensor dimension it governs.
struct FlagBinding {
  std::string param;
  int dim = 0;
  int replicate = 1;  // >1 marks the replicate-for-flatten transform
};

struct FlagInfo {
  int length = 0;
  int decision_layer = -1;  // conv layer whose output channels it masks
  std::vector<FlagBinding> bindings;
};

struct NetworkSpec {
  std::string arch;
  int input_h = 0, input_w = 0, input_c = 0;
  int num_classes = 0;
  std::vector<LayerRecord> layers;
  std::vector<FlagInfo> flags;

  int flag_count() const { return int(flags.size()); }
  std::vector<int> flag_lengths() const;
  int max_flag_length() const;

  // Human-readable architecture document: layers, flags, inheritance edges.
  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);

  void validate() const;
};

}  // namespace boxprune
