#include "cmg/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "cmg/errors.hpp"
#include "cmg/png_io.hpp"
#include "cmg/rng.hpp"

namespace cmg {
namespace fs = std::filesystem;

namespace {

std::vector<int64_t> shuffled_indices(int64_t n, std::mt19937_64& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

bool has_png_extension(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

}  // namespace

DomainDataset::DomainDataset(Domain domain, ImageTensor samples, std::vector<std::string> sample_ids)
    : domain_(domain), samples_(std::move(samples)), ids_(std::move(sample_ids)) {
  if (samples_.batch() != static_cast<int64_t>(ids_.size())) {
    throw ShapeError("sample count " + std::to_string(samples_.batch()) + " != id count " +
                     std::to_string(ids_.size()));
  }
  std::set<std::string> unique(ids_.begin(), ids_.end());
  if (unique.size() != ids_.size()) throw ShapeError("duplicate sample ids in dataset");
}

ImageTensor DomainDataset::gather(std::span<const int64_t> indices) const {
  auto index = torch::tensor(std::vector<int64_t>(indices.begin(), indices.end()), torch::kLong);
  return ImageTensor(samples_.tensor().index_select(0, index));
}

DomainDataset DomainDataset::subset(std::span<const int64_t> indices) const {
  std::vector<std::string> ids;
  ids.reserve(indices.size());
  for (int64_t i : indices) ids.push_back(ids_.at(static_cast<size_t>(i)));
  return DomainDataset(domain_, gather(indices), std::move(ids));
}

PairedValidationSet::PairedValidationSet(std::vector<ValidationPair> pairs)
    : pairs_(std::move(pairs)) {}

ImageTensor PairedValidationSet::inputs() const {
  std::vector<ImageTensor> xs;
  xs.reserve(pairs_.size());
  for (const auto& p : pairs_) xs.push_back(p.x);
  return ImageTensor::stack(xs);
}

ImageTensor PairedValidationSet::truths() const {
  std::vector<ImageTensor> ys;
  ys.reserve(pairs_.size());
  for (const auto& p : pairs_) ys.push_back(p.y_truth);
  return ImageTensor::stack(ys);
}

torch::Tensor load_image(const fs::path& file, int64_t resolution) {
  if (resolution <= 0) throw ShapeError("resolution must be positive");
  const GrayImage img = read_png(file);
  const auto resampled =
      resample_bilinear(img.pixels, img.height, img.width, resolution, resolution);
  auto out = torch::empty({1, 1, resolution, resolution}, torch::kFloat);
  auto* dst = out.data_ptr<float>();
  for (size_t i = 0; i < resampled.size(); ++i) {
    const double unit = std::clamp(resampled[i], 0.0, 1.0);
    dst[i] = static_cast<float>(std::clamp(2.0 * unit - 1.0, -1.0, 1.0));
  }
  return out;
}

std::vector<fs::path> list_png_files(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DatasetEmpty("not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_png_extension(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

DomainDataset load_dataset(const fs::path& dir, int64_t resolution, Domain domain) {
  const auto files = list_png_files(dir);
  if (files.empty()) throw DatasetEmpty("no PNG images in " + dir.string());
  std::vector<torch::Tensor> images;
  std::vector<std::string> ids;
  images.reserve(files.size());
  for (const auto& f : files) {
    images.push_back(load_image(f, resolution));
    ids.push_back(f.stem().string());
  }
  return DomainDataset(domain, ImageTensor(torch::cat(images, 0)), std::move(ids));
}

UnpairedBatchIterator::UnpairedBatchIterator(const DomainDataset& dx, const DomainDataset& dy,
                                             int64_t batch_size, uint64_t seed)
    : dx_(&dx), dy_(&dy), batch_size_(batch_size), seed_(seed) {
  if (dx.size() == 0 || dy.size() == 0) throw DatasetEmpty("both domains need samples");
  if (batch_size <= 0) throw BatchTooLarge("batch_size must be positive");
  const int64_t smallest = std::min(dx.size(), dy.size());
  if (batch_size > smallest) {
    throw BatchTooLarge("batch_size " + std::to_string(batch_size) + " exceeds smallest dataset (" +
                        std::to_string(smallest) + ")");
  }
  batches_per_epoch_ = smallest / batch_size;
}

void UnpairedBatchIterator::seek(IteratorPosition position) {
  if (position.epoch < 0 || position.batch < 0 || position.batch >= batches_per_epoch_) {
    throw ShapeError("iterator position out of range");
  }
  position_ = position;
}

std::vector<int64_t> UnpairedBatchIterator::permutation(Domain domain, int64_t epoch) const {
  const auto& ds = domain == Domain::X ? *dx_ : *dy_;
  auto rng = seeded_engine(seed_, domain == Domain::X ? 0x58u : 0x59u, static_cast<uint64_t>(epoch));
  return shuffled_indices(ds.size(), rng);
}

void UnpairedBatchIterator::refresh_permutations() {
  if (cached_epoch_ == position_.epoch) return;
  perm_x_ = permutation(Domain::X, position_.epoch);
  perm_y_ = permutation(Domain::Y, position_.epoch);
  cached_epoch_ = position_.epoch;
}

UnpairedBatchIterator::Batch UnpairedBatchIterator::next() {
  refresh_permutations();
  const auto offset = static_cast<size_t>(position_.batch * batch_size_);
  const auto count = static_cast<size_t>(batch_size_);
  Batch batch;
  batch.x_indices.assign(perm_x_.begin() + offset, perm_x_.begin() + offset + count);
  batch.y_indices.assign(perm_y_.begin() + offset, perm_y_.begin() + offset + count);
  batch.x = dx_->gather(batch.x_indices);
  batch.y = dy_->gather(batch.y_indices);
  if (++position_.batch == batches_per_epoch_) {
    position_.batch = 0;
    ++position_.epoch;
  }
  return batch;
}

std::string group_key(const std::string& stem) {
  const auto pos = stem.find('_');
  return pos == std::string::npos ? stem : stem.substr(0, pos);
}

std::vector<std::string> select_validation_groups(std::vector<std::string> groups,
                                                  double val_fraction, uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  if (groups.size() < 2) throw DatasetEmpty("need at least two groups to split");
  const auto n = static_cast<int64_t>(groups.size());
  const int64_t n_val =
      std::clamp<int64_t>(std::llround(val_fraction * static_cast<double>(n)), 1, n - 1);
  auto rng = seeded_engine(seed, 0x47u, 0);
  std::shuffle(groups.begin(), groups.end(), rng);
  groups.resize(static_cast<size_t>(n_val));
  std::sort(groups.begin(), groups.end());
  return groups;
}

PairedSplit split_paired(const fs::path& paired_root, double val_fraction, uint64_t seed,
                         int64_t resolution) {
  const auto x_files = list_png_files(paired_root / "X");
  const auto y_files = list_png_files(paired_root / "Y");
  if (x_files.empty()) throw DatasetEmpty("no PNG images in " + (paired_root / "X").string());

  std::map<std::string, fs::path> y_by_name;
  for (const auto& f : y_files) y_by_name.emplace(f.filename().string(), f);
  for (const auto& f : x_files) {
    if (!y_by_name.contains(f.filename().string())) {
      throw PairingMismatch(f.filename().string() + " present in X/ but not in Y/");
    }
  }
  if (y_files.size() != x_files.size()) {
    std::set<std::string> x_names;
    for (const auto& f : x_files) x_names.insert(f.filename().string());
    for (const auto& f : y_files) {
      if (!x_names.contains(f.filename().string())) {
        throw PairingMismatch(f.filename().string() + " present in Y/ but not in X/");
      }
    }
  }

  std::vector<std::string> groups;
  for (const auto& f : x_files) groups.push_back(group_key(f.stem().string()));
  const auto val_groups = select_validation_groups(groups, val_fraction, seed);
  const std::set<std::string> val_set(val_groups.begin(), val_groups.end());

  std::vector<torch::Tensor> tx, ty;
  std::vector<std::string> tx_ids, ty_ids;
  std::vector<ValidationPair> pairs;
  std::set<std::string> train_groups;
  for (const auto& xf : x_files) {
    const auto stem = xf.stem().string();
    const auto& yf = y_by_name.at(xf.filename().string());
    auto x = load_image(xf, resolution);
    auto y = load_image(yf, resolution);
    if (val_set.contains(group_key(stem))) {
      pairs.push_back({ImageTensor(x), ImageTensor(y), stem});
    } else {
      train_groups.insert(group_key(stem));
      tx.push_back(x);
      tx_ids.push_back(stem);
      ty.push_back(y);
      ty_ids.push_back(stem);
    }
  }

  DomainDataset train_x(Domain::X, ImageTensor(torch::cat(tx, 0)), std::move(tx_ids));
  DomainDataset y_in_x_order(Domain::Y, ImageTensor(torch::cat(ty, 0)), std::move(ty_ids));
  // Decouple Y from X's ordering.
  auto rng = seeded_engine(seed, 0x55u, 0);
  const auto order = shuffled_indices(y_in_x_order.size(), rng);
  DomainDataset train_y = y_in_x_order.subset(order);

  return PairedSplit{std::move(train_x), std::move(train_y), PairedValidationSet(std::move(pairs)),
                     {train_groups.begin(), train_groups.end()}, val_groups};
}

}  // namespace cmg
