#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "mshc/tensor.hpp"

namespace mshc {

// M x N x B reflectance raster, channel-last in memory, band-sequential on
// disk. band_mask tracks which original bands are still present.
struct HsiCube {
  i64 rows = 0;
  i64 cols = 0;
  i64 bands = 0;
  std::vector<real> values;  // (r * cols + c) * bands + b
  std::vector<std::uint8_t> band_mask;
  std::string provenance;
  std::vector<std::string> class_names;

  real at(i64 r, i64 c, i64 b) const {
    return values[(r * cols + c) * bands + b];
  }
  i64 pixel_count() const { return rows * cols; }
  Tensor to_tensor() const { return Tensor({rows, cols, bands}, values); }
};

// Class-id grid (0 = unlabeled) plus disjoint train/test masks.
struct LabelMap {
  i64 rows = 0;
  i64 cols = 0;
  int num_classes = 0;
  std::vector<std::uint16_t> grid;
  std::vector<std::string> class_names;
  std::vector<std::uint8_t> train_mask;
  std::vector<std::uint8_t> test_mask;

  void validate() const;
  std::vector<i64> pixels_where(const std::vector<std::uint8_t>& mask) const;
  std::vector<i64> train_pixels() const { return pixels_where(train_mask); }
  std::vector<i64> test_pixels() const { return pixels_where(test_mask); }
  std::vector<i64> class_histogram() const;
};

struct SyntheticSpec {
  i64 rows = 32;
  i64 cols = 32;
  i64 bands = 8;
  int num_classes = 4;
  std::vector<std::vector<real>> signatures;  // generated when empty
  int blobs_per_class = 2;
  real blob_radius_min = real(3);
  real blob_radius_max = real(8);
  real noise_sigma = real(0.05);
  real train_fraction = real(0.2);
  std::uint64_t seed = 0;

  void validate() const;
};

enum class CubeFormat { Hsc1, EnviBsq };
enum class NormalizeMode { PerBandZscore, MinMax01, None };

NormalizeMode normalize_mode_from_string(const std::string& s);
std::string to_string(NormalizeMode m);

// hsc1 container: "HSC1\n", canonical one-line JSON header, little-endian
// f32 payload in band-sequential order.
void save_cube_hsc1(const HsiCube& cube, const std::string& path);

// HSL1 container: "HSL1\n", JSON header, little-endian u16 grid. Labels and
// split masks are two files of this shape (split values: 0 none, 1 train,
// 2 test).
void save_labels_hsl1(const LabelMap& labels, const std::string& path);
void save_split_hsl1(const LabelMap& labels, const std::string& path);

HsiCube load_cube(const std::string& path, CubeFormat format);
LabelMap load_labels_and_split(const std::string& labels_path,
                               const std::string& split_path);

// Drops the listed bands (1-based indices in the ORIGINAL band numbering).
HsiCube filter_bands(const HsiCube& cube, const std::vector<int>& remove);

HsiCube normalize(const HsiCube& cube, NormalizeMode mode);

// Elliptical class blobs over a background class, spectra = class signature
// plus Gaussian noise, stratified train/test split.
std::pair<HsiCube, LabelMap> generate_synthetic(const SyntheticSpec& spec);

// Parses "104-108,150-163,220" into a sorted list of band indices.
std::vector<int> parse_band_list(const std::string& text);

}  // namespace mshc
