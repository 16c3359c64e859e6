#include "act/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "act/errors.hpp"
#include "act/png_io.hpp"

namespace act {

namespace fs = std::filesystem;
using torch::Tensor;

namespace {

auto f64() { return torch::TensorOptions().dtype(torch::kFloat64); }

torch::Generator seeded(std::uint64_t seed) {
  auto g = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  return g;
}

Tensor synth_gauss8(std::int64_t n, double sigma, torch::Generator& gen) {
  auto centers = gauss8_centers();
  auto idx = torch::arange(n, torch::kLong).remainder(8);
  auto noise = torch::randn({n, 2}, gen, f64());
  return centers.index_select(0, idx) + sigma * noise;
}

Tensor synth_checkerboard(std::int64_t n, torch::Generator& gen) {
  auto x1 = torch::rand({n}, gen, f64()) * 4.0 - 2.0;
  auto shift = torch::randint(0, 2, {n}, gen, f64()) * 2.0;
  auto x2 = torch::rand({n}, gen, f64()) - shift + torch::floor(x1).remainder(2.0);
  return torch::stack({x1, x2}, 1);
}

Tensor synth_swissroll(std::int64_t n, torch::Generator& gen) {
  auto u = torch::rand({n}, gen, f64());
  auto t = 1.5 * std::numbers::pi * (1.0 + 2.0 * u);
  auto pts = torch::stack({t * torch::cos(t), t * torch::sin(t)}, 1) / 5.0;
  return pts + 0.02 * torch::randn({n, 2}, gen, f64());
}

Tensor to_tensor(const RgbImage& img) {
  auto bytes = torch::from_blob(const_cast<std::uint8_t*>(img.pixels.data()), {img.height, img.width, 3},
                                torch::kUInt8);
  return bytes.to(torch::kFloat64).div(127.5).sub(1.0).permute({2, 0, 1}).contiguous();
}

Tensor load_folder(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("image_folder: '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError("image_folder: no .png files in '" + dir + "'");

  std::vector<Tensor> images;
  std::vector<std::string> offenders;
  std::int64_t w0 = 0, h0 = 0;
  for (const auto& f : files) {
    auto img = read_png_rgb(f.string());
    if (images.empty()) {
      w0 = img.width;
      h0 = img.height;
    } else if (img.width != w0 || img.height != h0) {
      offenders.push_back(f.filename().string() + " (" + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + ")");
      continue;
    }
    images.push_back(to_tensor(img));
  }
  if (!offenders.empty()) {
    std::ostringstream os;
    os << "image_folder: mixed resolutions, expected " << w0 << "x" << h0 << "; offenders:";
    for (const auto& o : offenders) os << ' ' << o;
    throw IngestionError(os.str());
  }
  return torch::stack(images);
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Gauss8: return "gauss8";
    case DatasetKind::Checkerboard: return "checkerboard";
    case DatasetKind::SwissRoll: return "swissroll";
    case DatasetKind::ImageFolder: return "image_folder";
  }
  return "gauss8";
}

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gauss8") return DatasetKind::Gauss8;
  if (s == "checkerboard") return DatasetKind::Checkerboard;
  if (s == "swissroll") return DatasetKind::SwissRoll;
  if (s == "image_folder") return DatasetKind::ImageFolder;
  throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

double normalize_pixel(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }

double denormalize_pixel(double x) { return (x + 1.0) * 127.5; }

Tensor gauss8_centers() {
  auto angles = torch::arange(8, f64()) * (2.0 * std::numbers::pi / 8.0);
  return 2.0 * torch::stack({torch::cos(angles), torch::sin(angles)}, 1);
}

Tensor gauss8_stratified(std::int64_t n, double sigma, torch::Generator& gen) {
  if (n <= 0 || n % 8 != 0) throw DomainError("gauss8_stratified: n must be a positive multiple of 8");
  return gauss8_centers().repeat({n / 8, 1}) + sigma * torch::randn({n, 2}, gen, f64());
}

Dataset::Dataset(DatasetSpec spec, Tensor samples) : spec_(std::move(spec)), samples_(std::move(samples)) {}

std::vector<std::int64_t> Dataset::sample_shape() const {
  auto s = samples_.sizes().vec();
  s.erase(s.begin());
  return s;
}

Tensor Dataset::at(std::int64_t i) const {
  if (i < 0 || i >= size()) throw DomainError("Dataset::at: index out of range");
  return samples_[i];
}

std::int64_t Dataset::batches_per_epoch(std::int64_t batch) const {
  if (batch <= 0) throw DomainError("batches_per_epoch: batch must be positive");
  return (size() + batch - 1) / batch;
}

Tensor Dataset::epoch_batch(std::int64_t epoch, std::int64_t index, std::int64_t batch) const {
  const auto nb = batches_per_epoch(batch);
  if (index < 0 || index >= nb) throw DomainError("epoch_batch: batch index out of range");
  auto gen = seeded(spec_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch) + 1);
  auto perm = torch::randperm(size(), gen, torch::kLong);
  const auto lo = index * batch;
  const auto hi = std::min(size(), lo + batch);
  return samples_.index_select(0, perm.slice(0, lo, hi));
}

std::optional<Tensor> Dataset::modes() const {
  if (spec_.kind == DatasetKind::Gauss8) return gauss8_centers();
  return std::nullopt;
}

DatasetPtr make_dataset(const DatasetSpec& spec) {
  auto gen = seeded(spec.seed);
  Tensor samples;
  if (spec.kind == DatasetKind::ImageFolder) {
    samples = load_folder(spec.path);
  } else {
    if (spec.size <= 0) throw DomainError("make_dataset: size must be positive");
    if (spec.sigma < 0.0) throw DomainError("make_dataset: sigma must be nonnegative");
    switch (spec.kind) {
      case DatasetKind::Gauss8: samples = synth_gauss8(spec.size, spec.sigma, gen); break;
      case DatasetKind::Checkerboard: samples = synth_checkerboard(spec.size, gen); break;
      case DatasetKind::SwissRoll: samples = synth_swissroll(spec.size, gen); break;
      default: break;
    }
  }
  // Stored order is a seeded shuffle of the synthesized / sorted file order.
  auto perm = torch::randperm(samples.size(0), gen, torch::kLong);
  return std::make_shared<const Dataset>(spec, samples.index_select(0, perm).contiguous());
}

Tensor next_batch(const Dataset& data, std::int64_t size, torch::Generator& gen) {
  if (size < 0) throw DomainError("next_batch: negative size");
  auto shape = data.sample_shape();
  if (size == 0) {
    shape.insert(shape.begin(), 0);
    return torch::empty(shape, f64());
  }
  auto idx = torch::randint(0, data.size(), {size}, gen, torch::kLong);
  return data.samples().index_select(0, idx);
}

void write_image_grid(const std::string& path, const Tensor& images, std::int64_t columns) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("write_image_grid: expected [B, 3, H, W]");
  const auto B = images.size(0), H = images.size(2), W = images.size(3);
  columns = std::max<std::int64_t>(1, std::min(columns, B));
  const auto rows = (B + columns - 1) / columns;
  RgbImage out;
  out.width = columns * W;
  out.height = rows * H;
  out.pixels.assign(out.width * out.height * 3, 0);
  auto px = images.detach().to(torch::kFloat64).clamp(-1.0, 1.0).add(1.0).mul(127.5).round().to(torch::kUInt8)
                .permute({0, 2, 3, 1})
                .contiguous();
  auto acc = px.accessor<std::uint8_t, 4>();
  for (std::int64_t b = 0; b < B; ++b) {
    const auto r0 = (b / columns) * H, c0 = (b % columns) * W;
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c) out.pixels[((r0 + y) * out.width + c0 + x) * 3 + c] = acc[b][y][x][c];
  }
  write_png_rgb(path, out);
}

Tensor read_image(const std::string& path) { return to_tensor(read_png_rgb(path)); }

}  // namespace act
