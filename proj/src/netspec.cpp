#include "boxprune/netspec.hpp"

#include <algorithm>
#include <set>

namespace boxprune {

using nlohmann::json;

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Add: return "add";
  }
  return "?";
}

namespace {

LayerKind layer_kind_from_name(const std::string& s) {
  for (LayerKind k : {LayerKind::Input, LayerKind::Conv, LayerKind::BatchNorm,
                      LayerKind::Relu, LayerKind::MaxPool, LayerKind::Flatten,
                      LayerKind::Dense, LayerKind::Add}) {
    if (s == layer_kind_name(k)) return k;
  }
  throw ConfigError("unknown layer kind: " + s);
}

}  // namespace

std::vector<int> NetworkSpec::flag_lengths() const {
  std::vector<int> out;
  out.reserve(flags.size());
  for (const auto& f : flags) out.push_back(f.length);
  return out;
}

int NetworkSpec::max_flag_length() const {
  int m = 0;
  for (const auto& f : flags) m = std::max(m, f.length);
  return m;
}

void NetworkSpec::validate() const {
  std::set<std::string> names;
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (!names.insert(l.name).second) {
      throw ConfigError("duplicate layer name: " + l.name);
    }
    if (l.kind != LayerKind::Input && (l.input < 0 || l.input >= int(i))) {
      throw ConfigError("layer " + l.name + " references an undefined input");
    }
    if (l.kind == LayerKind::Add && (l.shortcut < 0 || l.shortcut >= int(i))) {
      throw ConfigError("add layer " + l.name + " references an undefined shortcut");
    }
  }
  for (size_t f = 0; f < flags.size(); ++f) {
    if (flags[f].length <= 0) {
      throw ConfigError("flag " + std::to_string(f) + " has non-positive length");
    }
  }
}

json NetworkSpec::to_json() const {
  json j;
  j["arch"] = arch;
  j["input"] = {{"h", input_h}, {"w", input_w}, {"c", input_c}};
  j["num_classes"] = num_classes;
  json jlayers = json::array();
  for (const auto& l : layers) {
    json jl;
    jl["kind"] = layer_kind_name(l.kind);
    jl["name"] = l.name;
    jl["input"] = l.input;
    if (l.shortcut >= 0) jl["shortcut"] = l.shortcut;
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool) {
      jl["kernel"] = l.kernel;
      jl["stride"] = l.stride;
    }
    jl["in_channels"] = l.in_channels;
    jl["out_channels"] = l.out_channels;
    if (l.in_flag >= 0) jl["in_flag"] = l.in_flag;
    if (l.out_flag >= 0) jl["out_flag"] = l.out_flag;
    if (l.replicate != 1) jl["replicate"] = l.replicate;
    if (!l.block.empty()) jl["block"] = l.block;
    jlayers.push_back(jl);
  }
  j["layers"] = jlayers;
  json jflags = json::array();
  for (const auto& f : flags) {
    json jf;
    jf["length"] = f.length;
    jf["decision_layer"] = f.decision_layer;
    json jb = json::array();
    for (const auto& b : f.bindings) {
      json e = {{"param", b.param}, {"dim", b.dim}};
      if (b.replicate != 1) e["replicate"] = b.replicate;
      jb.push_back(e);
    }
    jf["bindings"] = jb;
    jflags.push_back(jf);
  }
  j["flags"] = jflags;
  return j;
}

NetworkSpec NetworkSpec::from_json(const json& j) {
  NetworkSpec s;
  s.arch = j.at("arch").get<std::string>();
  s.input_h = j.at("input").at("h").get<int>();
  s.input_w = j.at("input").at("w").get<int>();
  s.input_c = j.at("input").at("c").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  for (const auto& jl : j.at("layers")) {
    LayerRecord l;
    l.kind = layer_kind_from_name(jl.at("kind").get<std::string>());
    l.name = jl.at("name").get<std::string>();
    l.input = jl.at("input").get<int>();
    l.shortcut = jl.value("shortcut", -1);
    l.kernel = jl.value("kernel", 0);
    l.stride = jl.value("stride", 1);
    l.in_channels = jl.value("in_channels", 0);
    l.out_channels = jl.value("out_channels", 0);
    l.in_flag = jl.value("in_flag", -1);
    l.out_flag = jl.value("out_flag", -1);
    l.replicate = jl.value("replicate", 1);
    l.block = jl.value("block", std::string());
    s.layers.push_back(l);
  }
  for (const auto& jf : j.at("flags")) {
    FlagInfo f;
    f.length = jf.at("length").get<int>();
    f.decision_layer = jf.at("decision_layer").get<int>();
    for (const auto& jb : jf.at("bindings")) {
      FlagBinding b;
      b.param = jb.at("param").get<std::string>();
      b.dim = jb.at("dim").get<int>();
      b.replicate = jb.value("replicate", 1);
      f.bindings.push_back(b);
    }
    s.flags.push_back(f);
  }
  s.validate();
  return s;
}

}  // namespace boxprune
