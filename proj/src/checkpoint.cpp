#include "boxprune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace boxprune {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'O', 'X', 'P', 'R', 'U', 'N', 'E'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ConfigError("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_tensor_file(const std::string& path, const TensorFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, uint32_t(sizeof(real)));
  const std::string meta = file.meta.dump();
  write_pod(out, uint64_t(meta.size()));
  out.write(meta.data(), std::streamsize(meta.size()));
  write_pod(out, uint64_t(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    write_pod(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_pod(out, uint32_t(t.rank()));
    for (int d : t.shape()) write_pod(out, uint32_t(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              std::streamsize(size_t(t.numel()) * sizeof(real)));
  }
  if (!out) throw ConfigError("write failed: " + path);
}

TensorFile load_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("not a boxprune container: " + path);
  }
  const auto version = read_pod<uint32_t>(in);
  if (version != kVersion) {
    throw ConfigError("unsupported container version " + std::to_string(version));
  }
  const auto scalar_width = read_pod<uint32_t>(in);
  if (scalar_width != sizeof(real)) {
    throw ConfigError("container scalar width " + std::to_string(scalar_width) +
                      " does not match this build (" + std::to_string(sizeof(real)) +
                      ")");
  }
  TensorFile file;
  const auto meta_len = read_pod<uint64_t>(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), std::streamsize(meta_len));
  if (!in) throw ConfigError("checkpoint: truncated metadata");
  file.meta = nlohmann::json::parse(meta);

  const auto count = read_pod<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<uint32_t>(in);
    if (rank < 1 || rank > 4) throw ConfigError("checkpoint: bad tensor rank");
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (auto& d : shape) {
      d = int(read_pod<uint32_t>(in));
      numel *= d;
    }
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            std::streamsize(size_t(numel) * sizeof(real)));
    if (!in) throw ConfigError("checkpoint: truncated tensor data");
    file.tensors.emplace(std::move(name), std::move(t));
  }
  return file;
}

void save_checkpoint(const std::string& path, const Net& net,
                     std::optional<nlohmann::json> provenance) {
  TensorFile file;
  file.meta["kind"] = "net";
  file.meta["spec"] = net.spec.to_json();
  if (provenance) file.meta["provenance"] = *provenance;
  file.tensors = net.weights;
  save_tensor_file(path, file);
}

Net load_checkpoint(const std::string& path) {
  TensorFile file = load_tensor_file(path);
  if (file.meta.value("kind", "") != "net") {
    throw ConfigError("not a net checkpoint: " + path);
  }
  Net net;
  net.spec = NetworkSpec::from_json(file.meta.at("spec"));
  net.weights = std::move(file.tensors);
  const auto expected = param_shapes(net.spec);
  for (const auto& [name, shape] : expected) {
    auto it = net.weights.find(name);
    if (it == net.weights.end()) {
      throw ConfigError("checkpoint missing tensor: " + name);
    }
    if (it->second.shape() != shape) {
      throw ConfigError("checkpoint tensor shape mismatch: " + name);
    }
  }
  return net;
}

std::optional<nlohmann::json> checkpoint_provenance(const std::string& path) {
  TensorFile file = load_tensor_file(path);
  if (file.meta.contains("provenance")) return file.meta["provenance"];
  return std::nullopt;
}

}  // namespace boxprune
