#include "mshc/metrics.hpp"

#include <cmath>
#include <fstream>

#include "mshc/errors.hpp"

namespace mshc {

i64 ConfusionMatrix::total() const {
  i64 t = 0;
  for (i64 v : counts) t += v;
  return t;
}

i64 ConfusionMatrix::row_sum(int t) const {
  i64 s = 0;
  for (int j = 0; j < p; ++j) s += at(t, j);
  return s;
}

i64 ConfusionMatrix::col_sum(int pr) const {
  i64 s = 0;
  for (int i = 0; i < p; ++i) s += at(i, pr);
  return s;
}

ConfusionMatrix confusion(const std::vector<int>& pred, const LabelMap& truth,
                          const std::vector<std::uint8_t>& mask) {
  if (pred.size() != truth.grid.size() || mask.size() != truth.grid.size()) {
    throw DimensionError("confusion: grid extents disagree");
  }
  ConfusionMatrix cm(truth.num_classes);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const int t = truth.grid[i];
    if (t == 0) {
      throw ContractError("confusion: mask covers unlabeled pixel " +
                          std::to_string(i));
    }
    const int pr = pred[i];
    if (pr < 1 || pr > truth.num_classes) {
      throw ContractError("confusion: prediction " + std::to_string(pr) +
                          " outside 1.." + std::to_string(truth.num_classes) +
                          " at pixel " + std::to_string(i));
    }
    ++cm.at(t - 1, pr - 1);
  }
  return cm;
}

EvalReport oa_aa_kappa(const ConfusionMatrix& cm) {
  const i64 total = cm.total();
  if (total <= 0) throw ContractError("metrics: empty confusion matrix");
  EvalReport r;
  r.cm = cm;

  i64 diag = 0;
  for (int t = 0; t < cm.p; ++t) diag += cm.at(t, t);
  r.oa = static_cast<double>(diag) / static_cast<double>(total);

  double acc_sum = 0;
  int defined = 0;
  for (int t = 0; t < cm.p; ++t) {
    const i64 row = cm.row_sum(t);
    if (row == 0) {
      r.per_class.push_back(0.0);
      r.class_defined.push_back(0);
      continue;
    }
    const double acc =
        static_cast<double>(cm.at(t, t)) / static_cast<double>(row);
    r.per_class.push_back(acc);
    r.class_defined.push_back(1);
    acc_sum += acc;
    ++defined;
  }
  r.aa = defined > 0 ? acc_sum / defined : 0.0;

  double pe = 0;
  for (int t = 0; t < cm.p; ++t) {
    pe += static_cast<double>(cm.row_sum(t)) *
          static_cast<double>(cm.col_sum(t));
  }
  pe /= static_cast<double>(total) * static_cast<double>(total);
  if (pe >= 1.0) {
    r.kappa = r.oa == 1.0 ? 1.0 : 0.0;
  } else {
    r.kappa = (r.oa - pe) / (1.0 - pe);
  }
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["oa"] = oa;
  j["aa"] = aa;
  j["kappa"] = kappa;
  j["per_class"] = per_class;
  j["class_defined"] = class_defined;
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < cm.p; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p2 = 0; p2 < cm.p; ++p2) row.push_back(cm.at(t, p2));
    rows.push_back(row);
  }
  j["counts"] = rows;
  return j;
}

std::vector<Rgb> default_palette(int classes) {
  static const std::vector<Rgb> base = {
      {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
      {245, 130, 48}, {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
      {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
      {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
      {128, 128, 0},  {255, 215, 180}, {0, 0, 128},    {128, 128, 128},
  };
  std::vector<Rgb> palette;
  palette.push_back({0, 0, 0});  // unlabeled
  for (int c = 0; c < classes; ++c) {
    if (c < static_cast<int>(base.size())) {
      palette.push_back(base[static_cast<std::size_t>(c)]);
    } else {
      // golden-angle hue walk for the tail
      const double h = std::fmod(0.618033988749895 * (c + 1), 1.0) * 6.0;
      const int sector = static_cast<int>(h);
      const double f = h - sector;
      const auto to_u8 = [](double x) {
        return static_cast<std::uint8_t>(std::lround(255.0 * x));
      };
      const std::uint8_t v = 230, p = 40;
      const std::uint8_t q = to_u8((230.0 / 255.0) * (1.0 - 0.8 * f));
      const std::uint8_t t = to_u8((230.0 / 255.0) * (1.0 - 0.8 * (1.0 - f)));
      switch (sector % 6) {
        case 0: palette.push_back({v, t, p}); break;
        case 1: palette.push_back({q, v, p}); break;
        case 2: palette.push_back({p, v, t}); break;
        case 3: palette.push_back({p, q, v}); break;
        case 4: palette.push_back({t, p, v}); break;
        default: palette.push_back({v, p, q}); break;
      }
    }
  }
  return palette;
}

void export_map(const std::vector<int>& pred, i64 rows, i64 cols,
                const std::vector<Rgb>& palette, const std::string& path) {
  if (static_cast<i64>(pred.size()) != rows * cols) {
    throw DimensionError("export_map: prediction grid extents disagree");
  }
  int max_class = 0;
  for (int v : pred) max_class = std::max(max_class, v);
  if (static_cast<int>(palette.size()) < max_class + 1) {
    throw ConfigError("export_map: palette has " +
                      std::to_string(palette.size()) + " entries, need " +
                      std::to_string(max_class + 1));
  }
  std::string out = "P6\n" + std::to_string(cols) + " " +
                    std::to_string(rows) + "\n255\n";
  out.reserve(out.size() + pred.size() * 3);
  for (int v : pred) {
    const Rgb& c = palette[static_cast<std::size_t>(v)];
    out.push_back(static_cast<char>(c[0]));
    out.push_back(static_cast<char>(c[1]));
    out.push_back(static_cast<char>(c[2]));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FileError("short write on " + path);
}

}  // namespace mshc
