#pragma once

#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "boxprune/graph.hpp"

namespace boxprune {

// Self-describing binary container: magic, version, a JSON metadata blob,
// then (name, shape, raw little-endian scalars) entries. Round-trips are
// bit-exact.
struct TensorFile {
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;
};

void save_tensor_file(const std::string& path, const TensorFile& file);
TensorFile load_tensor_file(const std::string& path);

// Net checkpoints embed the NetworkSpec and optional provenance (e.g. the
// profile a pruned net came from) in the metadata blob.
void save_checkpoint(const std::string& path, const Net& net,
                     std::optional<nlohmann::json> provenance = std::nullopt);
Net load_checkpoint(const std::string& path);
std::optional<nlohmann::json> checkpoint_provenance(const std::string& path);

}  // namespace boxprune
