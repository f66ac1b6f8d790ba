#include "cforest/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "cforest/detail/rng.hpp"
#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"

namespace cforest {

namespace {

void validate_dataset(const Matrix& features, const std::vector<std::uint8_t>& labels,
                      const std::vector<double>& weights,
                      const std::vector<std::string>& names) {
  const std::size_t n = features.rows();
  if (labels.size() != n) throw DataError("label count does not match row count");
  if (weights.size() != n) throw DataError("weight count does not match row count");
  if (!names.empty() && names.size() != features.cols())
    throw DataError("feature name count does not match column count");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 1)
      throw DataError("non-binary label at row " + std::to_string(i + 1));
    if (!std::isfinite(weights[i]) || weights[i] <= 0.0)
      throw DataError("non-positive weight at row " + std::to_string(i + 1));
  }
  const double* data = features.data();
  const std::size_t total = n * features.cols();
  for (std::size_t i = 0; i < total; ++i) {
    if (!std::isfinite(data[i]))
      throw DataError("non-finite feature value at row " + std::to_string(i / features.cols() + 1));
  }
}

}  // namespace

Dataset::Dataset(Matrix features, std::vector<std::uint8_t> labels, std::vector<double> weights,
                 std::vector<std::string> feature_names)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      weights_(std::move(weights)),
      feature_names_(std::move(feature_names)) {
  validate_dataset(features_, labels_, weights_, feature_names_);
}

Dataset::Dataset(Matrix features, std::vector<std::uint8_t> labels,
                 std::vector<std::string> feature_names)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      weights_(labels_.size(), 1.0),
      feature_names_(std::move(feature_names)) {
  validate_dataset(features_, labels_, weights_, feature_names_);
}

std::size_t Dataset::positives() const {
  std::size_t p = 0;
  for (auto y : labels_) p += y;
  return p;
}

Dataset Dataset::select_columns(std::span<const std::size_t> keep) const {
  for (auto c : keep) {
    if (c >= cols()) throw DataError("column index " + std::to_string(c) + " out of range");
  }
  Matrix out(rows(), keep.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t j = 0; j < keep.size(); ++j) out.at(r, j) = features_.at(r, keep[j]);
  }
  std::vector<std::string> names;
  if (!feature_names_.empty()) {
    names.reserve(keep.size());
    for (auto c : keep) names.push_back(feature_names_[c]);
  }
  return Dataset(std::move(out), labels_, weights_, std::move(names));
}

Dataset Dataset::select_rows(std::span<const std::size_t> keep) const {
  for (auto r : keep) {
    if (r >= rows()) throw DataError("row index " + std::to_string(r) + " out of range");
  }
  Matrix out(keep.size(), cols());
  std::vector<std::uint8_t> labels(keep.size());
  std::vector<double> weights(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    auto src = features_.row(keep[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
    labels[i] = labels_[keep[i]];
    weights[i] = weights_[keep[i]];
  }
  return Dataset(std::move(out), std::move(labels), std::move(weights), feature_names_);
}

Dataset Dataset::with_weights(std::vector<double> weights) && {
  return Dataset(std::move(features_), std::move(labels_), std::move(weights),
                 std::move(feature_names_));
}

std::vector<std::size_t> FoldPlan::rows_in(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < assignments.size(); ++r) {
    if (assignments[r] == fold) out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::rows_outside(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < assignments.size(); ++r) {
    if (assignments[r] != fold) out.push_back(r);
  }
  return out;
}

ColumnRef ColumnRef::parse(const std::string& text) {
  std::size_t idx = 0;
  if (!text.empty() && detail::parse_size(text, idx)) return by_index(idx);
  return by_name(text);
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  // A trailing newline produces no extra line with getline; interior blank
  // lines are rejected later as ragged rows.
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::size_t resolve_column(const ColumnRef& ref, const std::vector<std::string>& header,
                           bool has_header, std::size_t width, const std::string& role) {
  if (ref.index) {
    if (*ref.index >= width)
      throw ConfigError(role + " column index " + std::to_string(*ref.index) +
                        " out of range for " + std::to_string(width) + " columns");
    return *ref.index;
  }
  if (!has_header)
    throw ConfigError(role + " column referenced by name '" + *ref.name +
                      "' but the file has no header");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == *ref.name) return i;
  }
  throw ConfigError(role + " column '" + *ref.name + "' not found in header");
}

struct ParsedCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> cells;  // row-major
  std::size_t width = 0;
};

ParsedCsv parse_numeric_csv(const std::filesystem::path& path, bool has_header) {
  ParsedCsv out;
  auto lines = read_lines(path);
  std::size_t first_data = 0;
  if (has_header) {
    if (lines.empty()) throw DataError(path.string() + ": empty file");
    for (auto cell : detail::split(lines[0], ',')) out.header.emplace_back(cell);
    out.width = out.header.size();
    first_data = 1;
  }
  if (lines.size() <= first_data) throw DataError(path.string() + ": no data rows");
  out.cells.reserve(lines.size() - first_data);
  for (std::size_t li = first_data; li < lines.size(); ++li) {
    auto cells = detail::split(lines[li], ',');
    if (out.width == 0) out.width = cells.size();
    if (cells.size() != out.width)
      throw DataError(path.string() + ": row " + std::to_string(li + 1) + " has " +
                      std::to_string(cells.size()) + " values, expected " +
                      std::to_string(out.width));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!detail::parse_double(cells[c], row[c]))
        throw DataError(path.string() + ": non-numeric value '" + std::string(cells[c]) +
                        "' at row " + std::to_string(li + 1) + ", column " + std::to_string(c + 1));
    }
    out.cells.push_back(std::move(row));
  }
  return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, bool has_header, const ColumnRef& label,
                 const std::optional<ColumnRef>& weight) {
  ParsedCsv csv = parse_numeric_csv(path, has_header);
  const std::size_t width = csv.width;
  const std::size_t label_col = resolve_column(label, csv.header, has_header, width, "label");
  std::optional<std::size_t> weight_col;
  if (weight) {
    weight_col = resolve_column(*weight, csv.header, has_header, width, "weight");
    if (*weight_col == label_col)
      throw ConfigError("label and weight refer to the same column");
  }

  const std::size_t d = width - 1 - (weight_col ? 1 : 0);
  const std::size_t n = csv.cells.size();
  Matrix features(n, d);
  std::vector<std::uint8_t> labels(n);
  std::vector<double> weights(n, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = csv.cells[r];
    const std::size_t file_row = r + (has_header ? 2 : 1);
    double y = row[label_col];
    if (y != 0.0 && y != 1.0)
      throw DataError(path.string() + ": non-binary label " + detail::format_double(y) +
                      " at row " + std::to_string(file_row));
    labels[r] = static_cast<std::uint8_t>(y);
    if (weight_col) {
      double w = row[*weight_col];
      if (!std::isfinite(w) || w <= 0.0)
        throw DataError(path.string() + ": non-positive weight at row " + std::to_string(file_row));
      weights[r] = w;
    }
    std::size_t j = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col || (weight_col && c == *weight_col)) continue;
      features.at(r, j++) = row[c];
    }
  }

  std::vector<std::string> names;
  if (has_header) {
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col || (weight_col && c == *weight_col)) continue;
      names.push_back(csv.header[c]);
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) names.push_back("f" + std::to_string(j));
  }
  return Dataset(std::move(features), std::move(labels), std::move(weights), std::move(names));
}

std::pair<Matrix, std::vector<std::string>> load_csv_matrix(const std::filesystem::path& path,
                                                            bool has_header,
                                                            const std::optional<ColumnRef>& drop) {
  ParsedCsv csv = parse_numeric_csv(path, has_header);
  std::optional<std::size_t> drop_col;
  if (drop) drop_col = resolve_column(*drop, csv.header, has_header, csv.width, "dropped");
  const std::size_t d = csv.width - (drop_col ? 1 : 0);
  Matrix out(csv.cells.size(), d);
  for (std::size_t r = 0; r < csv.cells.size(); ++r) {
    std::size_t j = 0;
    for (std::size_t c = 0; c < csv.width; ++c) {
      if (drop_col && c == *drop_col) continue;
      out.at(r, j++) = csv.cells[r][c];
    }
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < csv.width; ++c) {
    if (drop_col && c == *drop_col) continue;
    names.push_back(has_header ? csv.header[c] : "f" + std::to_string(c));
  }
  return {std::move(out), std::move(names)};
}

void write_csv(const Dataset& ds, const std::filesystem::path& path, bool include_weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::string line;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    const std::string name =
        ds.feature_names().empty() ? "f" + std::to_string(j) : ds.feature_names()[j];
    line += name;
    line += ',';
  }
  line += include_weights ? "label,weight\n" : "label\n";
  out << line;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    line.clear();
    auto row = ds.features().row(r);
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      line += detail::format_double(row[j]);
      line += ',';
    }
    line += ds.labels()[r] ? '1' : '0';
    if (include_weights) {
      line += ',';
      line += detail::format_double(ds.weights()[r]);
    }
    line += '\n';
    out << line;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

FoldPlan kfold_split(const Dataset& ds, int k, std::uint64_t seed, bool stratified) {
  if (k < 2) throw ConfigError("k must be at least 2, got " + std::to_string(k));
  const std::size_t n = ds.rows();
  if (n < static_cast<std::size_t>(k))
    throw DataError("cannot split " + std::to_string(n) + " rows into " + std::to_string(k) +
                    " folds");
  FoldPlan plan;
  plan.k = k;
  plan.assignments.assign(n, -1);
  detail::Rng rng(detail::mix_seed(seed, 0x6b666f6cULL));

  if (stratified) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t r = 0; r < n; ++r) (ds.labels()[r] ? pos : neg).push_back(r);
    if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k))
      throw DataError("stratified split needs at least k rows of each class");
    rng.shuffle(pos);
    rng.shuffle(neg);
    for (std::size_t i = 0; i < pos.size(); ++i) plan.assignments[pos[i]] = static_cast<int>(i % k);
    for (std::size_t i = 0; i < neg.size(); ++i) plan.assignments[neg[i]] = static_cast<int>(i % k);
  } else {
    std::vector<std::size_t> rows(n);
    for (std::size_t r = 0; r < n; ++r) rows[r] = r;
    rng.shuffle(rows);
    for (std::size_t i = 0; i < n; ++i) plan.assignments[rows[i]] = static_cast<int>(i % k);
  }
  return plan;
}

std::vector<double> balanced_weights(std::span<const std::uint8_t> labels) {
  std::size_t pos = 0;
  for (auto y : labels) pos += y;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("balanced weights require both classes");
  const bool pos_minority = pos <= neg;
  const double ratio = pos_minority ? static_cast<double>(neg) / static_cast<double>(pos)
                                    : static_cast<double>(pos) / static_cast<double>(neg);
  std::vector<double> w(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const bool minority = (labels[r] == 1) == pos_minority;
    w[r] = minority ? ratio : 1.0;
  }
  return w;
}

Dataset synth_imbalanced(std::size_t n, std::size_t d, std::size_t d_informative, double pos_rate,
                         std::uint64_t seed) {
  if (n < 2) throw ConfigError("synthetic data needs at least 2 rows");
  if (d == 0) throw ConfigError("synthetic data needs at least 1 column");
  if (d_informative > d) throw ConfigError("d_informative exceeds d");
  if (!(pos_rate > 0.0) || !(pos_rate < 1.0)) throw ConfigError("pos_rate must be in (0, 1)");
  const auto n_pos = static_cast<std::size_t>(std::llround(pos_rate * static_cast<double>(n)));
  if (n_pos == 0 || n_pos >= n)
    throw ConfigError("pos_rate " + detail::format_double(pos_rate) + " leaves no rows of one class");

  std::vector<std::uint8_t> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + n_pos, std::uint8_t{1});
  detail::Rng label_rng(detail::mix_seed(seed, 0x1abe1ULL));
  label_rng.shuffle(labels);

  // Signal design: a desk-scale stand-in for production transaction tables.
  // Seven of ten positives carry a moderate signature spread across the
  // informative columns (weak mean shifts, an interaction kind whose shift
  // direction depends on the previous raw draw, a variance kind with no mean
  // signal). The remaining positives are drawn from the background
  // distribution and stay genuinely unrankable; they cap the reachable AUC
  // and punish models that spend capacity memorizing individual heavy rows.
  // Noise columns never depend on the class.
  detail::Rng rng(detail::mix_seed(seed, 0xfea7ULL));
  detail::Rng blend_rng(detail::mix_seed(seed, 0xb1e4dULL));
  Matrix x(n, d);
  std::vector<double> raw(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) raw[j] = rng.next_normal();
    const bool pos = labels[r] == 1;
    const bool marked = pos && blend_rng.next_double() >= 0.3;
    auto row = x.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      double v = raw[j];
      if (marked && j < d_informative) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        switch (j % 3) {
          case 0: {  // moderate mean shift
            v += sign * (0.50 + 0.05 * static_cast<double>(j % 4));
            break;
          }
          case 1: {  // interaction: shift direction depends on the previous raw draw
            v += sign * 0.8 * (raw[j - 1] >= 0.0 ? 1.0 : -1.0);
            break;
          }
          default: {  // variance scale
            v *= 1.5;
            break;
          }
        }
      }
      row[j] = v;
    }
  }

  std::vector<std::string> names(d);
  for (std::size_t j = 0; j < d; ++j) names[j] = "f" + std::to_string(j);
  return Dataset(std::move(x), std::move(labels), std::move(names));
}

}  // namespace cforest
