#include "cmg/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cmg/errors.hpp"

namespace cmg {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "archive format assumes little-endian");

namespace {

constexpr char kMagic[8] = {'C', 'M', 'G', 'T', 'E', 'N', 'S', '1'};

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat: return 0;
    case torch::kDouble: return 1;
    case torch::kLong: return 2;
    default: throw CheckpointError("unsupported tensor dtype in archive");
  }
}

torch::ScalarType dtype_from_code(uint8_t code) {
  switch (code) {
    case 0: return torch::kFloat;
    case 1: return torch::kDouble;
    case 2: return torch::kLong;
    default: throw IncompatibleCheckpoint("unknown dtype code in archive");
  }
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& file) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IncompatibleCheckpoint("truncated archive " + file.string());
  return value;
}

}  // namespace

void write_tensor_archive(const fs::path& file, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + file.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<uint64_t>(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    const auto t = tensor.detach().contiguous().cpu();
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint8_t>(out, dtype_code(t.scalar_type()));
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (int64_t d : t.sizes()) put<int64_t>(out, d);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  out.flush();
  if (!out) throw CheckpointError("failed writing " + file.string());
}

std::vector<NamedTensor> read_tensor_archive(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IncompatibleCheckpoint("cannot open archive " + file.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IncompatibleCheckpoint("not a tensor archive: " + file.string());
  }
  const auto count = get<uint64_t>(in, file);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<uint32_t>(in, file);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = dtype_from_code(get<uint8_t>(in, file));
    const auto rank = get<uint32_t>(in, file);
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = get<int64_t>(in, file);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    if (!in) throw IncompatibleCheckpoint("truncated archive " + file.string());
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return tensors;
}

void write_text_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + file.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw CheckpointError("failed writing " + file.string());
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IncompatibleCheckpoint("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void load_module_parameters(torch::nn::Module& module, const std::string& prefix,
                            const std::map<std::string, torch::Tensor>& archived) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters(true)) {
    const std::string key = prefix + item.key();
    auto it = archived.find(key);
    if (it == archived.end()) throw IncompatibleCheckpoint("missing tensor " + key);
    if (it->second.sizes() != item.value().sizes()) {
      throw IncompatibleCheckpoint("shape mismatch for " + key);
    }
    item.value().copy_(it->second);
  }
}

void save_extractor(const fs::path& dir, FeatureExtractor& f, int64_t resolution, uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CheckpointError("cannot create " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["kind"] = "feature_extractor";
  manifest["base_filters"] = f->spec().base_filters;
  manifest["stages"] = f->spec().stages;
  manifest["resolution"] = resolution;
  manifest["seed"] = seed;
  json shapes = json::array();
  for (const auto& s : f->layer_shapes(resolution)) shapes.push_back({s.height, s.width, s.depth});
  manifest["layer_shapes"] = shapes;
  std::vector<NamedTensor> tensors;
  for (const auto& item : f->named_parameters(true)) tensors.emplace_back(item.key(), item.value());
  write_tensor_archive(dir / "tensors.bin", tensors);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

FeatureExtractor load_extractor(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint("bad extractor manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("kind", "") != "feature_extractor") {
    throw IncompatibleCheckpoint(dir.string() + " is not a feature extractor archive");
  }
  FeatureExtractorSpec spec;
  spec.base_filters = manifest.at("base_filters").get<int64_t>();
  spec.stages = manifest.at("stages").get<int64_t>();
  FeatureExtractor f(spec);
  const auto tensors = read_tensor_archive(dir / "tensors.bin");
  load_module_parameters(*f, "", {tensors.begin(), tensors.end()});
  f->freeze();
  return f;
}

}  // namespace cmg
