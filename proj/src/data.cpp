#include "cmpmort/data.hpp"

#include <cfenv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cmpmort/errors.hpp"

namespace cmpmort {

void MortalityDataset::check() const {
  const int A = n_ages();
  const int T = n_years();
  if (A == 0 || T == 0) throw DataError("dataset: empty axis");
  if (deaths.rows() != A || deaths.cols() != T || exposures.rows() != A ||
      exposures.cols() != T) {
    throw DataError("dataset: matrix dimensions do not match axes");
  }
  for (int i = 1; i < A; ++i) {
    if (ages[i] <= ages[i - 1]) throw DataError("dataset: ages not strictly increasing");
  }
  for (int i = 1; i < T; ++i) {
    if (years[i] != years[i - 1] + 1) throw DataError("dataset: years not consecutive");
  }
  for (int x = 0; x < A; ++x) {
    for (int t = 0; t < T; ++t) {
      if (deaths(x, t) < 0) throw DataError("dataset: negative death count");
      if (!(exposures(x, t) > 0.0)) throw DataError("dataset: non-positive exposure");
    }
  }
  if (holdout) {
    holdout->check();
    if (holdout->ages != ages) throw DataError("dataset: holdout age axis differs");
    if (holdout->years.front() != years.back() + 1) {
      throw DataError("dataset: holdout years not contiguous with training years");
    }
  }
}

namespace {

struct HmdCell {
  double female = 0, male = 0, total = 0;
};

// Parses one HMD 1x1 file into (year, age) -> row.  Lines before the
// "Year Age ..." header are skipped; "110+"-style ages keep their numeric part.
std::map<std::pair<int, int>, HmdCell> read_hmd_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open HMD file: " + path);
  std::map<std::pair<int, int>, HmdCell> cells;
  std::string line;
  bool in_data = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue;
    if (!in_data) {
      if (first == "Year") in_data = true;
      continue;
    }
    std::string age_str, f_str, m_str, t_str;
    if (!(ss >> age_str >> f_str >> m_str >> t_str)) {
      throw DataError("malformed HMD row in " + path + ": " + line);
    }
    int year = 0, age = 0;
    try {
      year = std::stoi(first);
      if (!age_str.empty() && age_str.back() == '+') age_str.pop_back();
      age = std::stoi(age_str);
    } catch (const std::exception&) {
      throw DataError("non-numeric year/age in " + path + ": " + line);
    }
    auto parse_value = [&](const std::string& s) {
      if (s == ".") return std::numeric_limits<double>::quiet_NaN();
      try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw DataError("non-numeric field in " + path + ": " + line);
      }
    };
    cells[{year, age}] = {parse_value(f_str), parse_value(m_str), parse_value(t_str)};
  }
  if (cells.empty()) throw DataError("no data rows found in " + path);
  return cells;
}

long round_half_even(double v) {
  const int old_mode = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const long r = static_cast<long>(std::nearbyint(v));
  std::fesetround(old_mode);
  return r;
}

MortalityDataset build_block(const std::map<std::pair<int, int>, HmdCell>& deaths,
                             const std::map<std::pair<int, int>, HmdCell>& exposures,
                             int age_min, int age_max, int year_first, int year_last) {
  const int A = age_max - age_min + 1;
  const int T = year_last - year_first + 1;
  if (A <= 0 || T <= 0) throw DataError("load_hmd: empty requested range");
  MortalityDataset ds;
  ds.deaths.resize(A, T);
  ds.exposures.resize(A, T);
  for (int a = 0; a < A; ++a) ds.ages.push_back(age_min + a);
  for (int t = 0; t < T; ++t) ds.years.push_back(year_first + t);
  for (int a = 0; a < A; ++a) {
    for (int t = 0; t < T; ++t) {
      const std::pair<int, int> key{year_first + t, age_min + a};
      const auto di = deaths.find(key);
      const auto ei = exposures.find(key);
      if (di == deaths.end() || ei == exposures.end()) {
        throw DataError("load_hmd: missing cell year " + std::to_string(key.first) +
                        " age " + std::to_string(key.second));
      }
      const double d = di->second.male;
      const double e = ei->second.male;
      if (std::isnan(d) || std::isnan(e)) {
        throw DataError("load_hmd: missing value at year " + std::to_string(key.first) +
                        " age " + std::to_string(key.second));
      }
      if (!(e > 0.0)) {
        throw DataError("load_hmd: non-positive exposure at year " +
                        std::to_string(key.first) + " age " + std::to_string(key.second));
      }
      ds.deaths(a, t) = round_half_even(d);
      ds.exposures(a, t) = e;
    }
  }
  return ds;
}

const char* bin_color(double v, const HeatmapBins& bins) {
  if (v <= bins.thresholds[0]) return "#4daf4a";
  if (v <= bins.thresholds[1]) return "#ffff33";
  if (v <= bins.thresholds[2]) return "#ff7f00";
  return "#e41a1c";
}

}  // namespace

MortalityDataset load_hmd(const std::string& deaths_path, const std::string& exposures_path,
                          const HmdRange& range) {
  const auto deaths = read_hmd_file(deaths_path);
  const auto exposures = read_hmd_file(exposures_path);
  MortalityDataset train = build_block(deaths, exposures, range.age_min, range.age_max,
                                       range.train_first, range.train_last);
  if (range.has_holdout()) {
    if (range.holdout_first != range.train_last + 1) {
      throw DataError("load_hmd: holdout years must directly follow training years");
    }
    auto hold = std::make_shared<MortalityDataset>(
        build_block(deaths, exposures, range.age_min, range.age_max, range.holdout_first,
                    range.holdout_last));
    train.holdout = std::move(hold);
  }
  train.check();
  return train;
}

void export_grid(const Eigen::MatrixXd& grid, const std::vector<int>& row_labels,
                 const std::vector<int>& col_labels, const std::string& path,
                 GridFormat format, const HeatmapBins& bins) {
  if (grid.rows() != static_cast<Eigen::Index>(row_labels.size()) ||
      grid.cols() != static_cast<Eigen::Index>(col_labels.size())) {
    throw DataError("export_grid: labels do not match grid shape");
  }
  std::ofstream out(path);
  if (!out) throw DataError("export_grid: cannot write " + path);

  if (format == GridFormat::Csv) {
    out << "age";
    for (int c : col_labels) out << "," << c;
    out << "\n";
    char buf[32];
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      out << row_labels[r];
      for (Eigen::Index c = 0; c < grid.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", grid(r, c));
        out << "," << buf;
      }
      out << "\n";
    }
    return;
  }

  const int cell = 8;
  const int margin = 40;
  const int w = margin + cell * static_cast<int>(grid.cols()) + 10;
  const int h = margin + cell * static_cast<int>(grid.rows()) + 10;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      out << "<rect x=\"" << margin + cell * c << "\" y=\"" << margin + cell * r
          << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
          << bin_color(grid(r, c), bins) << "\"/>\n";
    }
  }
  const auto label_step = [](std::size_t n) { return n > 20 ? 10 : 5; };
  for (std::size_t r = 0; r < row_labels.size(); r += label_step(row_labels.size())) {
    out << "<text x=\"2\" y=\"" << margin + cell * r + cell << "\" font-size=\"9\">"
        << row_labels[r] << "</text>\n";
  }
  for (std::size_t c = 0; c < col_labels.size(); c += label_step(col_labels.size())) {
    out << "<text x=\"" << margin + cell * c << "\" y=\"" << margin - 6
        << "\" font-size=\"9\">" << col_labels[c] << "</text>\n";
  }
  out << "</svg>\n";
}

Eigen::MatrixXd import_grid(const std::string& path, std::vector<int>* row_labels,
                            std::vector<int>* col_labels) {
  std::ifstream in(path);
  if (!in) throw DataError("import_grid: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("import_grid: empty file " + path);

  std::vector<int> cols;
  {
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');  // corner label
    while (std::getline(ss, tok, ',')) cols.push_back(std::stoi(tok));
  }
  std::vector<int> rows;
  std::vector<std::vector<double>> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    rows.push_back(std::stoi(tok));
    std::vector<double> rv;
    while (std::getline(ss, tok, ',')) rv.push_back(std::stod(tok));
    if (rv.size() != cols.size()) throw DataError("import_grid: ragged row in " + path);
    values.push_back(std::move(rv));
  }
  Eigen::MatrixXd grid(values.size(), cols.size());
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) grid(r, c) = values[r][c];
  }
  if (row_labels) *row_labels = rows;
  if (col_labels) *col_labels = cols;
  return grid;
}

}  // namespace cmpmort
