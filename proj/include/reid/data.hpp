#ifndef REID_DATA_HPP_
#define REID_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "reid/mat.hpp"
#include "reid/rng.hpp"

namespace reid {

// H x W x C image, values in [0, 1], stored HWC.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}
  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

enum class Split { kTrain, kQuery, kGallery };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

using Payload = std::variant<Mat, Image>;  // Mat payloads are 1 x dim

struct Item {
  Payload payload;
  int pid = 0;     // identity as written in the source data
  int camid = 0;
  Split split = Split::kTrain;
  std::string path;  // relative payload path when loaded from a manifest
};

std::size_t payload_dim(const Payload& p);
// Flattened payload as a 1 x dim row.
Mat payload_row(const Payload& p);

struct Dataset {
  std::vector<Item> items;
  // Train-split pid -> dense class index in [0, num_train_ids).
  std::map<int, int> pid_map;

  // Rebuilds pid_map from the train split (ascending pid order).
  void reindex();
  std::vector<std::size_t> indices(Split s) const;
  std::size_t num_train_ids() const { return pid_map.size(); }
  std::size_t input_dim() const;
};

// Stacked payload rows plus ids for one split.
struct SplitView {
  Mat features;
  std::vector<int> pids;
  std::vector<int> camids;
  std::vector<std::size_t> item_index;
};
SplitView split_view(const Dataset& ds, Split s);
// Train split with dense labels in place of raw pids.
SplitView train_view(const Dataset& ds);

struct SynthConfig {
  std::size_t num_ids = 64;
  std::size_t samples_per_id = 16;
  std::size_t dim = 32;
  // Std of isotropic Gaussian perturbation added to the unit identity
  // direction, scaled by 1/sqrt(dim).
  double direction_noise = 0.3;
  // Radial scale of each sample is uniform in
  // [radius - norm_confound/2, radius + norm_confound/2].
  double radius = 1.75;
  double norm_confound = 2.5;
  // Identity directions are normalize(common + separation * random_unit).
  double inter_id_separation = 2.0;
  std::size_t cameras = 4;
  // Magnitude of a per-camera offset added before the radial scaling.
  double camera_shift = 0.4;
  // The last nuisance_dims coordinates carry no identity signal, only
  // N(0, nuisance_scale^2) clutter shared in distribution by every id.
  std::size_t nuisance_dims = 16;
  double nuisance_scale = 0.5;
  // Identities [0, num_train_ids) train; the rest form query/gallery.
  std::size_t num_train_ids = 32;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);
Dataset gen_synthetic(const SynthConfig& cfg);

// Payload containers.
//   *.f64 : uint64 little-endian element count, then that many IEEE-754
//           binary64 values, little-endian.
//   *.pgm / *.ppm : binary netpbm (P5 / P6), maxval 255; pixels map to
//           value / 255.
void write_vector_file(const std::filesystem::path& path, std::span<const double> v);
std::vector<double> read_vector_file(const std::filesystem::path& path);
void write_image_file(const std::filesystem::path& path, const Image& img);
Image read_image_file(const std::filesystem::path& path);

// Manifest CSV with header "path,pid,camid,split"; paths are relative to
// the manifest's directory.
Dataset load_manifest(const std::filesystem::path& manifest);
// Writes every payload under dir (items without a path get
// payloads/NNNNNN.f64|.pgm|.ppm), then dir/manifest.csv and dir/pid_map.csv.
// Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& ds, const std::filesystem::path& dir);
void write_manifest(const Dataset& ds, const std::filesystem::path& manifest);
void write_pid_map(const Dataset& ds, const std::filesystem::path& path);

enum class EraseFill { kMean, kNoise };

struct RandomErasingConfig {
  double probability = 0.5;
  std::pair<double, double> area = {0.02, 0.4};
  std::pair<double, double> aspect = {0.3, 3.33};
  EraseFill fill = EraseFill::kMean;
  std::vector<double> channel_mean;  // per channel, for kMean
};

void validate(const RandomErasingConfig& cfg);
Image random_erasing(const Image& img, const RandomErasingConfig& cfg, Rng& rng);
Image horizontal_flip(const Image& img, double p, Rng& rng);
Image flip_columns(const Image& img);

// Per-channel mean over the train split's image payloads.
std::vector<double> channel_mean(const Dataset& ds);

}  // namespace reid

#endif  // REID_DATA_HPP_
