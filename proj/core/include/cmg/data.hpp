#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmg/image.hpp"

namespace cmg {

enum class Domain { X, Y };

// Immutable set of same-shape samples from one domain. Safe to share across
// threads once constructed.
class DomainDataset {
 public:
  DomainDataset(Domain domain, ImageTensor samples, std::vector<std::string> sample_ids);

  Domain domain() const noexcept { return domain_; }
  int64_t size() const noexcept { return static_cast<int64_t>(ids_.size()); }
  int64_t resolution() const { return samples_.resolution(); }
  const ImageTensor& samples() const noexcept { return samples_; }
  const std::vector<std::string>& sample_ids() const noexcept { return ids_; }

  ImageTensor gather(std::span<const int64_t> indices) const;
  // Dataset restricted to `indices`, in that order.
  DomainDataset subset(std::span<const int64_t> indices) const;

 private:
  Domain domain_;
  ImageTensor samples_;
  std::vector<std::string> ids_;
};

struct ValidationPair {
  ImageTensor x;
  ImageTensor y_truth;
  std::string pair_id;
};

class PairedValidationSet {
 public:
  PairedValidationSet() = default;
  explicit PairedValidationSet(std::vector<ValidationPair> pairs);

  const std::vector<ValidationPair>& pairs() const noexcept { return pairs_; }
  int64_t size() const noexcept { return static_cast<int64_t>(pairs_.size()); }
  bool empty() const noexcept { return pairs_.empty(); }

  ImageTensor inputs() const;
  ImageTensor truths() const;

 private:
  std::vector<ValidationPair> pairs_;
};

// Decodes one grayscale PNG, resamples to resolution x resolution and maps to
// [-1, 1]. Result has shape (1, 1, resolution, resolution).
torch::Tensor load_image(const std::filesystem::path& file, int64_t resolution);

// Sorted list of *.png files directly inside `dir`.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

// Loads every PNG in `dir` (ordered by filename); sample ids are file stems.
// Throws DatasetEmpty, DecodeError or ChannelError.
DomainDataset load_dataset(const std::filesystem::path& dir, int64_t resolution,
                           Domain domain = Domain::X);

// Position of an UnpairedBatchIterator; fully determines its future output.
struct IteratorPosition {
  int64_t epoch = 0;
  int64_t batch = 0;

  bool operator==(const IteratorPosition&) const = default;
};

// Serves (x, y) batches drawn through two independently seeded permutations
// that are regenerated every epoch. The final partial batch is dropped, so an
// epoch has floor(min(|X|, |Y|) / batch_size) batches. Single consumer; the
// datasets must outlive the iterator.
class UnpairedBatchIterator {
 public:
  UnpairedBatchIterator(const DomainDataset& dx, const DomainDataset& dy, int64_t batch_size,
                        uint64_t seed);

  int64_t batches_per_epoch() const noexcept { return batches_per_epoch_; }
  IteratorPosition position() const noexcept { return position_; }
  void seek(IteratorPosition position);

  // Index order used for `domain` during `epoch`.
  std::vector<int64_t> permutation(Domain domain, int64_t epoch) const;

  struct Batch {
    ImageTensor x;
    ImageTensor y;
    std::vector<int64_t> x_indices;
    std::vector<int64_t> y_indices;
  };
  Batch next();

 private:
  void refresh_permutations();

  const DomainDataset* dx_;
  const DomainDataset* dy_;
  int64_t batch_size_;
  uint64_t seed_;
  int64_t batches_per_epoch_;
  IteratorPosition position_;
  std::vector<int64_t> perm_x_;
  std::vector<int64_t> perm_y_;
  int64_t cached_epoch_ = -1;
};

// Grouping key of a paired file: the stem prefix before the first underscore.
std::string group_key(const std::string& stem);

// Deterministically picks round(val_fraction * |groups|) validation groups
// (at least one, leaving at least one for training).
std::vector<std::string> select_validation_groups(std::vector<std::string> groups,
                                                  double val_fraction, uint64_t seed);

struct PairedSplit {
  DomainDataset train_x;
  DomainDataset train_y;
  PairedValidationSet validation;
  std::vector<std::string> train_groups;
  std::vector<std::string> validation_groups;
};

// Splits a paired root (<root>/X, <root>/Y with matching filenames) by group.
// Training X and Y are returned in independently shuffled orders so no
// positional pairing survives. Throws PairingMismatch when a filename lacks
// its counterpart.
PairedSplit split_paired(const std::filesystem::path& paired_root, double val_fraction,
                         uint64_t seed, int64_t resolution);

}  // namespace cmg
