#ifndef CMPMORT_DATA_HPP
#define CMPMORT_DATA_HPP

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

namespace cmpmort {

// Rectangular deaths/exposures grid.  Rows are ages, columns are years.
// Immutable after construction; cheap to share between threads.
struct MortalityDataset {
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> deaths;
  Eigen::MatrixXd exposures;
  std::vector<int> ages;   // strictly increasing
  std::vector<int> years;  // strictly consecutive
  std::shared_ptr<const MortalityDataset> holdout;  // later years, same ages

  int n_ages() const { return static_cast<int>(ages.size()); }
  int n_years() const { return static_cast<int>(years.size()); }
  int n_cohorts() const { return n_ages() + n_years() - 1; }

  // 0-based cohort index of cell (x, t): diagonals of constant t - x.
  int cohort_index(int x, int t) const { return t - x + n_ages() - 1; }

  // Throws DataError when shapes or axis invariants are violated.
  void check() const;
};

struct HmdRange {
  int age_min = 0;
  int age_max = 99;
  int train_first = 1961;
  int train_last = 2002;
  int holdout_first = 0;  // holdout skipped unless holdout_first <= holdout_last
  int holdout_last = -1;
  bool has_holdout() const { return holdout_first <= holdout_last; }
};

// HMD 1x1 period layout: preamble, then a "Year Age Female Male Total"
// header, then one whitespace-delimited row per (year, age).  The male
// column is used.  Fractional death counts are rounded to nearest even.
MortalityDataset load_hmd(const std::string& deaths_path, const std::string& exposures_path,
                          const HmdRange& range);

enum class GridFormat { Csv, SvgHeatmap };

struct HeatmapBins {
  // value <= t[0] green, <= t[1] yellow, <= t[2] orange, else red
  double thresholds[3] = {1.0, 2.706, 3.84};
};

void export_grid(const Eigen::MatrixXd& grid, const std::vector<int>& row_labels,
                 const std::vector<int>& col_labels, const std::string& path,
                 GridFormat format, const HeatmapBins& bins = HeatmapBins{});

// Re-reads a CSV written by export_grid (used for round-trips and by tests).
Eigen::MatrixXd import_grid(const std::string& path, std::vector<int>* row_labels = nullptr,
                            std::vector<int>* col_labels = nullptr);

}  // namespace cmpmort

#endif
