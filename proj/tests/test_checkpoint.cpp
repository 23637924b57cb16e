#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "boxprune/checkpoint.hpp"
#include "boxprune/netzoo.hpp"

using namespace boxprune;

TEST_CASE("net checkpoints round-trip bit-exactly") {
  const std::string path = "ckpt_roundtrip.bin";
  NetworkSpec spec = resnet20_4();
  Net net = init_net(spec, 42);
  net.weights.at("stem.w")[0] = real(0.1) + real(0.2);  // not exactly representable
  save_checkpoint(path, net, nlohmann::json{{"note", "test"}});

  Net loaded = load_checkpoint(path);
  CHECK(loaded.spec.arch == spec.arch);
  CHECK(loaded.spec.flag_count() == spec.flag_count());
  for (const auto& [name, w] : net.weights) {
    const Tensor& other = loaded.weights.at(name);
    REQUIRE(other.same_shape(w));
    for (int64_t i = 0; i < w.numel(); ++i) CHECK(w[i] == other[i]);
  }
  CHECK(checkpoint_provenance(path).has_value());
  std::filesystem::remove(path);
}

TEST_CASE("spec JSON survives the round trip") {
  NetworkSpec spec = cnet_small();
  NetworkSpec back = NetworkSpec::from_json(spec.to_json());
  CHECK(back.arch == spec.arch);
  CHECK(back.flag_lengths() == spec.flag_lengths());
  CHECK(back.layers.size() == spec.layers.size());
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    CHECK(back.layers[i].name == spec.layers[i].name);
    CHECK(back.layers[i].in_flag == spec.layers[i].in_flag);
    CHECK(back.layers[i].out_flag == spec.layers[i].out_flag);
    CHECK(back.layers[i].replicate == spec.layers[i].replicate);
  }
  for (size_t f = 0; f < spec.flags.size(); ++f) {
    CHECK(back.flags[f].bindings.size() == spec.flags[f].bindings.size());
    CHECK(back.flags[f].decision_layer == spec.flags[f].decision_layer);
  }
}

TEST_CASE("corrupt and foreign files are rejected") {
  const std::string path = "ckpt_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_tensor_file(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_tensor_file("no_such_file.bin"), ConfigError);
}
