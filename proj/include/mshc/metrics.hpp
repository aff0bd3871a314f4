#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "mshc/data.hpp"

namespace mshc {

// counts[true][pred], both 0-based over P classes.
struct ConfusionMatrix {
  int p = 0;
  std::vector<i64> counts;

  explicit ConfusionMatrix(int classes = 0)
      : p(classes),
        counts(static_cast<std::size_t>(classes) * classes, 0) {}
  i64& at(int t, int pr) { return counts[static_cast<std::size_t>(t) * p + pr]; }
  i64 at(int t, int pr) const {
    return counts[static_cast<std::size_t>(t) * p + pr];
  }
  i64 total() const;
  i64 row_sum(int t) const;
  i64 col_sum(int pr) const;
};

struct EvalReport {
  ConfusionMatrix cm;
  std::vector<double> per_class;        // diagonal / row sum
  std::vector<std::uint8_t> class_defined;  // rows with samples
  double oa = 0;
  double aa = 0;
  double kappa = 0;

  nlohmann::json to_json() const;
};

// Confusion counts over the masked pixels. pred is a full-raster class grid
// (1-based).
ConfusionMatrix confusion(const std::vector<int>& pred, const LabelMap& truth,
                          const std::vector<std::uint8_t>& mask);

EvalReport oa_aa_kappa(const ConfusionMatrix& cm);

using Rgb = std::array<std::uint8_t, 3>;

// Fixed palette: index 0 black (unlabeled), then well-separated class colors.
std::vector<Rgb> default_palette(int classes);

// Binary PPM (P6) of the class map.
void export_map(const std::vector<int>& pred, i64 rows, i64 cols,
                const std::vector<Rgb>& palette, const std::string& path);

}  // namespace mshc
