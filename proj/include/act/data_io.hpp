#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace act {

enum class DatasetKind { Gauss8, Checkerboard, SwissRoll, ImageFolder };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& s);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Gauss8;
  std::int64_t size = 8192;  // ignored for image_folder
  std::uint64_t seed = 0;
  double sigma = 0.02;       // per-mode std for gauss8
  std::string path;          // image_folder directory
};

// Pixel normalization: [0, 255] <-> [-1, 1].
double normalize_pixel(std::uint8_t v);
double denormalize_pixel(double x);

// In-memory, read-only dataset. Samples are stored in a seeded order; the
// same spec always yields the same order.
class Dataset {
 public:
  Dataset(DatasetSpec spec, torch::Tensor samples);

  const DatasetSpec& spec() const { return spec_; }
  std::int64_t size() const { return samples_.size(0); }
  std::vector<std::int64_t> sample_shape() const;
  bool is_image() const { return spec_.kind == DatasetKind::ImageFolder; }
  const torch::Tensor& samples() const { return samples_; }
  torch::Tensor at(std::int64_t i) const;

  // Sequential epoch iteration over a per-epoch seeded permutation.
  std::int64_t batches_per_epoch(std::int64_t batch) const;
  torch::Tensor epoch_batch(std::int64_t epoch, std::int64_t index, std::int64_t batch) const;

  // Mixture centers for gauss8, empty otherwise.
  std::optional<torch::Tensor> modes() const;

 private:
  DatasetSpec spec_;
  torch::Tensor samples_;
};

using DatasetPtr = std::shared_ptr<const Dataset>;

/// Builds the dataset. image_folder reads every .png in a flat directory and
/// throws IngestionError listing files whose resolution differs from the first.
DatasetPtr make_dataset(const DatasetSpec& spec);

/// i.i.d. with-replacement draws (uniform indices from `gen`).
torch::Tensor next_batch(const Dataset& data, std::int64_t size, torch::Generator& gen);

/// The eight gauss8 centers on the radius-2 ring, [8, 2].
torch::Tensor gauss8_centers();

/// gauss8 draws with exactly n/8 points per mode (n must be a multiple of 8):
/// a lower-variance reference sample of the same distribution.
torch::Tensor gauss8_stratified(std::int64_t n, double sigma, torch::Generator& gen);

/// Images in [-1, 1], [B, 3, H, W], to a row-major tile grid PNG.
void write_image_grid(const std::string& path, const torch::Tensor& images, std::int64_t columns);
torch::Tensor read_image(const std::string& path);  // [3, H, W] in [-1, 1]

}  // namespace act
