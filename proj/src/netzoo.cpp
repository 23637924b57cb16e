#include "boxprune/netzoo.hpp"

#include <stdexcept>

namespace boxprune {

namespace {

class SpecBuilder {
 public:
  explicit SpecBuilder(InputShape in) {
    spec_.input_h = in.h;
    spec_.input_w = in.w;
    spec_.input_c = in.c;
    LayerRecord input;
    input.kind = LayerKind::Input;
    input.name = "input";
    input.out_channels = in.c;
    spec_.layers.push_back(input);
    spatial_.push_back({in.h, in.w});
  }

  int new_flag(int length) {
    spec_.flags.push_back(FlagInfo{length, -1, {}});
    return int(spec_.flags.size()) - 1;
  }

  // in_flag governs kernel dim 2, out_flag dim 3.
  int conv(const std::string& name, int from, int kernel, int stride, int out_ch,
           int in_flag, int out_flag, const std::string& block = "") {
    LayerRecord l;
    l.kind = LayerKind::Conv;
    l.name = name;
    l.input = from;
    l.kernel = kernel;
    l.stride = stride;
    l.in_channels = spec_.layers[size_t(from)].out_channels;
    l.out_channels = out_ch;
    l.in_flag = in_flag;
    l.out_flag = out_flag;
    l.block = block;
    const auto [ih, iw] = spatial_[size_t(from)];
    const int idx = push(l, {(ih + stride - 1) / stride, (iw + stride - 1) / stride});
    if (in_flag >= 0) spec_.flags[size_t(in_flag)].bindings.push_back({name + ".w", 2, 1});
    if (out_flag >= 0) {
      auto& f = spec_.flags[size_t(out_flag)];
      f.bindings.push_back({name + ".w", 3, 1});
      if (f.decision_layer < 0) f.decision_layer = idx;
    }
    return idx;
  }

  int batchnorm(const std::string& name, int from, int flag,
                const std::string& block = "") {
    LayerRecord l;
    l.kind = LayerKind::BatchNorm;
    l.name = name;
    l.input = from;
    l.in_channels = l.out_channels = spec_.layers[size_t(from)].out_channels;
    l.out_flag = flag;
    l.block = block;
    const int idx = push(l, spatial_[size_t(from)]);
    if (flag >= 0) {
      for (const char* p : {".gamma", ".beta", ".running_mean", ".running_var"}) {
        spec_.flags[size_t(flag)].bindings.push_back({name + p, 0, 1});
      }
    }
    return idx;
  }

  int relu(const std::string& name, int from) {
    LayerRecord l;
    l.kind = LayerKind::Relu;
    l.name = name;
    l.input = from;
    l.in_channels = l.out_channels = spec_.layers[size_t(from)].out_channels;
    l.out_flag = spec_.layers[size_t(from)].out_flag;
    return push(l, spatial_[size_t(from)]);
  }

  int maxpool(const std::string& name, int from) {
    LayerRecord l;
    l.kind = LayerKind::MaxPool;
    l.name = name;
    l.input = from;
    l.kernel = 2;
    l.stride = 2;
    l.in_channels = l.out_channels = spec_.layers[size_t(from)].out_channels;
    l.out_flag = spec_.layers[size_t(from)].out_flag;
    const auto [ih, iw] = spatial_[size_t(from)];
    return push(l, {ih / 2, iw / 2});
  }

  int add(const std::string& name, int a, int b, const std::string& block) {
    LayerRecord l;
    l.kind = LayerKind::Add;
    l.name = name;
    l.input = a;
    l.shortcut = b;
    l.in_channels = l.out_channels = spec_.layers[size_t(a)].out_channels;
    l.out_flag = spec_.layers[size_t(a)].out_flag;
    l.block = block;
    return push(l, spatial_[size_t(a)]);
  }

  int flatten_dense(int from, int num_classes, int flag) {
    const auto [fh, fw] = spatial_[size_t(from)];
    LayerRecord fl;
    fl.kind = LayerKind::Flatten;
    fl.name = "flatten";
    fl.input = from;
    fl.in_channels = fl.out_channels = spec_.layers[size_t(from)].out_channels;
    const int fidx = push(fl, {1, 1});

    LayerRecord d;
    d.kind = LayerKind::Dense;
    d.name = "head";
    d.input = fidx;
    d.in_channels = spec_.layers[size_t(from)].out_channels;
    d.out_channels = num_classes;
    d.in_flag = flag;
    d.replicate = fh * fw;  // row-major flatten keeps channels fastest
    const int idx = push(d, {1, 1});
    if (flag >= 0) {
      spec_.flags[size_t(flag)].bindings.push_back({"head.w", 0, fh * fw});
    }
    return idx;
  }

  NetworkSpec finish(const std::string& arch, int num_classes) {
    spec_.arch = arch;
    spec_.num_classes = num_classes;
    spec_.validate();
    return std::move(spec_);
  }

  int last() const { return int(spec_.layers.size()) - 1; }

 private:
  int push(const LayerRecord& l, std::pair<int, int> hw) {
    spec_.layers.push_back(l);
    spatial_.push_back(hw);
    return int(spec_.layers.size()) - 1;
  }

  NetworkSpec spec_;
  std::vector<std::pair<int, int>> spatial_;
};

}  // namespace

NetworkSpec build_convnet(int n_convs, int channels, int num_classes, InputShape in) {
  if (channels < 2) throw ConfigError("build_convnet: channels must be >= 2");
  if (n_convs < 1) throw ConfigError("build_convnet: need at least one conv");
  SpecBuilder b(in);
  int prev_flag = -1;
  for (int t = 0; t < n_convs; ++t) {
    const int flag = b.new_flag(channels);
    b.conv("conv" + std::to_string(t + 1), b.last(), 3, 1, channels, prev_flag, flag);
    b.relu("relu" + std::to_string(t + 1), b.last());
    if (t % 2 == 1) b.maxpool("pool" + std::to_string(t / 2 + 1), b.last());
    prev_flag = flag;
  }
  b.flatten_dense(b.last(), num_classes, prev_flag);
  return b.finish("convnet" + std::to_string(n_convs) + "-" + std::to_string(channels),
                  num_classes);
}

NetworkSpec build_cnet(int channels, int num_classes, InputShape in) {
  NetworkSpec s = build_convnet(6, channels, num_classes, in);
  s.arch = "cnet-" + std::to_string(channels);
  return s;
}

NetworkSpec build_resnet20(int width, int num_classes, InputShape in) {
  if (width < 2) throw ConfigError("build_resnet20: width must be >= 2");
  SpecBuilder b(in);

  const int stem_flag = b.new_flag(width);
  b.conv("stem", 0, 3, 1, width, -1, stem_flag);
  b.batchnorm("stem.bn", b.last(), stem_flag);
  b.relu("stem.relu", b.last());

  const int block_channels[3] = {width, 2 * width, 8 * width};
  int in_flag = stem_flag;
  int block_in = b.last();

  for (int blk = 0; blk < 3; ++blk) {
    const std::string bname = "block" + std::to_string(blk + 1);
    const int ch = block_channels[blk];
    const int entry_stride = blk == 0 ? 1 : 2;
    int out_flag = -1;
    for (int u = 0; u < 3; ++u) {
      const std::string uname = bname + ".bb" + std::to_string(u + 1);
      const int stride = u == 0 ? entry_stride : 1;
      const int a_flag = b.new_flag(ch);
      b.conv(uname + ".conv_a", block_in, 3, stride, ch, in_flag, a_flag, bname);
      b.batchnorm(uname + ".bn_a", b.last(), a_flag, bname);
      b.relu(uname + ".relu_a", b.last());
      if (u == 0) out_flag = b.new_flag(ch);
      b.conv(uname + ".conv_b", b.last(), 3, 1, ch, a_flag, out_flag, bname);
      const int main_path = b.batchnorm(uname + ".bn_b", b.last(), out_flag, bname);

      int shortcut = block_in;
      if (u == 0) {
        // Projection carries no flag of its own; both dims are inherited.
        b.conv(uname + ".proj", block_in, 1, stride, ch, in_flag, out_flag, bname);
        shortcut = b.batchnorm(uname + ".proj.bn", b.last(), out_flag, bname);
      }
      b.add(uname + ".add", main_path, shortcut, bname);
      b.relu(uname + ".relu_b", b.last());
      block_in = b.last();
      in_flag = out_flag;
    }
  }

  b.flatten_dense(block_in, num_classes, in_flag);
  return b.finish("resnet20-" + std::to_string(width), num_classes);
}

NetworkSpec cnet_small(int num_classes, InputShape in) {
  NetworkSpec s = build_cnet(8, num_classes, in);
  s.arch = "cnet-small";
  return s;
}

NetworkSpec resnet20_4(int num_classes, InputShape in) {
  return build_resnet20(4, num_classes, in);
}

NetworkSpec build_arch(const std::string& arch, int num_classes, InputShape in) {
  if (arch == "cnet-small") return cnet_small(num_classes, in);
  if (arch.rfind("cnet-", 0) == 0) {
    return build_cnet(std::stoi(arch.substr(5)), num_classes, in);
  }
  if (arch.rfind("resnet20-", 0) == 0) {
    return build_resnet20(std::stoi(arch.substr(9)), num_classes, in);
  }
  throw ConfigError("unknown architecture: " + arch);
}

int64_t param_count_from_retained(const NetworkSpec& spec,
                                  const std::vector<int>& retained) {
  if (retained.size() != spec.flags.size()) {
    throw ShapeError("param_count: retained-count length " +
                     std::to_string(retained.size()) + " != flag count " +
                     std::to_string(spec.flags.size()));
  }
  for (size_t f = 0; f < retained.size(); ++f) {
    if (retained[f] < 1 || retained[f] > spec.flags[f].length) {
      throw ShapeError("param_count: retained count out of range for flag " +
                       std::to_string(f));
    }
  }
  auto eff = [&](int flag, int full) {
    return flag >= 0 ? int64_t(retained[size_t(flag)]) : int64_t(full);
  };
  int64_t total = 0;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        total += int64_t(l.kernel) * l.kernel * eff(l.in_flag, l.in_channels) *
                 eff(l.out_flag, l.out_channels);
        break;
      case LayerKind::Dense:
        total += eff(l.in_flag, l.in_channels) * l.replicate * l.out_channels +
                 l.out_channels;
        break;
      default:
        break;
    }
  }
  return total;
}

int64_t param_count(const NetworkSpec& spec, const MaskSet* masks) {
  std::vector<int> retained;
  if (masks) {
    if (masks->flag_count() != spec.flag_count()) {
      throw ShapeError("param_count: mask flag count mismatch");
    }
    for (int f = 0; f < spec.flag_count(); ++f) {
      if (int(masks->retain[size_t(f)].size()) != spec.flags[size_t(f)].length) {
        throw ShapeError("param_count: mask length mismatch on flag " +
                         std::to_string(f));
      }
    }
    retained = masks->ones_counts();
  } else {
    retained = spec.flag_lengths();
  }
  return param_count_from_retained(spec, retained);
}

}  // namespace boxprune
