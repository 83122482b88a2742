#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wfr/rng.hpp"

namespace wfr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kNumClasses = 4;

enum class ClassLabel : std::uint8_t {
  MoveForward = 0,
  SlightRightTurn = 1,
  SharpRightTurn = 2,
  SlightLeftTurn = 3,
};

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses{
    ClassLabel::MoveForward, ClassLabel::SlightRightTurn, ClassLabel::SharpRightTurn,
    ClassLabel::SlightLeftTurn};

constexpr std::size_t class_index(ClassLabel c) noexcept { return static_cast<std::size_t>(c); }
constexpr ClassLabel class_from_index(std::size_t i) noexcept { return static_cast<ClassLabel>(i); }

inline std::string_view class_name(ClassLabel c) {
  switch (c) {
    case ClassLabel::MoveForward: return "MoveForward";
    case ClassLabel::SlightRightTurn: return "SlightRightTurn";
    case ClassLabel::SharpRightTurn: return "SharpRightTurn";
    case ClassLabel::SlightLeftTurn: return "SlightLeftTurn";
  }
  return "?";
}

// Index of the largest entry; the lowest index wins ties.
template <typename Range>
std::size_t argmax_lowest(const Range& values) {
  std::size_t best = 0;
  std::size_t i = 0;
  for (const auto& v : values) {
    if (v > values[best]) best = i;
    ++i;
  }
  return best;
}

enum class Width : std::size_t { Full24 = 24, Simplified4 = 4, Simplified2 = 2 };

inline constexpr std::array<Width, 3> kAllWidths{Width::Full24, Width::Simplified4,
                                                 Width::Simplified2};

constexpr std::size_t width_columns(Width w) noexcept { return static_cast<std::size_t>(w); }

inline std::optional<Width> width_from_columns(std::size_t d) {
  switch (d) {
    case 24: return Width::Full24;
    case 4: return Width::Simplified4;
    case 2: return Width::Simplified2;
    default: return std::nullopt;
  }
}

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maps file label tokens to classes. Defaults are the strings used by the
// published wall-following files.
class LabelTable {
 public:
  LabelTable()
      : tokens_{{"Move-Forward", ClassLabel::MoveForward},
                {"Slight-Right-Turn", ClassLabel::SlightRightTurn},
                {"Sharp-Right-Turn", ClassLabel::SharpRightTurn},
                {"Slight-Left-Turn", ClassLabel::SlightLeftTurn}} {}

  explicit LabelTable(std::map<std::string, ClassLabel, std::less<>> tokens)
      : tokens_(std::move(tokens)) {}

  std::optional<ClassLabel> lookup(std::string_view token) const {
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
  }

  // Token written for a class when saving; first mapping in key order wins.
  std::string token_for(ClassLabel c) const {
    for (const auto& [token, label] : tokens_)
      if (label == c) return token;
    return std::string(class_name(c));
  }

 private:
  std::map<std::string, ClassLabel, std::less<>> tokens_;
};

// Immutable feature matrix + labels. Rows are samples, columns sensors.
class Dataset {
 public:
  Dataset(Matrix features, std::vector<ClassLabel> labels, Width width)
      : features_(std::move(features)), labels_(std::move(labels)), width_(width) {
    if (features_.rows() == 0) throw DataError("empty dataset");
    if (static_cast<std::size_t>(features_.cols()) != width_columns(width_))
      throw DataError("feature columns (" + std::to_string(features_.cols()) +
                      ") do not match width " + std::to_string(width_columns(width_)));
    if (static_cast<std::size_t>(features_.rows()) != labels_.size())
      throw DataError("feature rows and label count differ");
    if (!features_.allFinite()) throw DataError("non-finite feature value");
  }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<ClassLabel>& labels() const noexcept { return labels_; }
  Width width() const noexcept { return width_; }
  std::size_t rows() const noexcept { return labels_.size(); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(features_.cols()); }

  std::span<const double> row(std::size_t i) const noexcept {
    return {features_.data() + i * cols(), cols()};
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Matrix x(static_cast<Eigen::Index>(indices.size()), features_.cols());
    std::vector<ClassLabel> y;
    y.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(indices[r]));
      y.push_back(labels_[indices[r]]);
    }
    return Dataset(std::move(x), std::move(y), width_);
  }

  // Same rows, restricted columns.
  Matrix select_columns(std::span<const std::size_t> columns) const {
    Matrix x(features_.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c)
      x.col(static_cast<Eigen::Index>(c)) = features_.col(static_cast<Eigen::Index>(columns[c]));
    return x;
  }

  std::array<std::size_t, kNumClasses> class_counts() const noexcept {
    std::array<std::size_t, kNumClasses> counts{};
    for (auto l : labels_) ++counts[class_index(l)];
    return counts;
  }

 private:
  Matrix features_;
  std::vector<ClassLabel> labels_;
  Width width_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view token) {
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace detail

// Parses comma-separated records: `width` numeric fields then a label token.
// Blank lines are skipped; every error names the source and line number.
inline Dataset parse_dataset(std::istream& in, Width width, const std::string& source = "<stream>",
                             const LabelTable& table = LabelTable{}) {
  const std::size_t d = width_columns(width);
  std::vector<double> values;
  std::vector<ClassLabel> labels;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = detail::trim(line);
    if (text.empty()) continue;
    fields.clear();
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      fields.push_back(detail::trim(text.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    const auto where = source + ":" + std::to_string(line_no);
    if (fields.size() != d + 1)
      throw DataError(where + ": expected " + std::to_string(d) + " numeric fields and a label, got " +
                      std::to_string(fields.size()) + " fields");
    for (std::size_t j = 0; j < d; ++j) {
      auto v = detail::parse_double(fields[j]);
      if (!v)
        throw DataError(where + ": unparsable numeric field " + std::to_string(j + 1) + " '" +
                        std::string(fields[j]) + "'");
      values.push_back(*v);
    }
    auto label = table.lookup(fields[d]);
    if (!label) throw DataError(where + ": unknown label token '" + std::string(fields[d]) + "'");
    labels.push_back(*label);
  }
  if (labels.empty()) throw DataError(source + ": empty dataset");
  Matrix x = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                      static_cast<Eigen::Index>(d));
  return Dataset(std::move(x), std::move(labels), width);
}

inline Dataset load_dataset(const std::string& path, Width width,
                            const LabelTable& table = LabelTable{}) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  return parse_dataset(in, width, path, table);
}

// Inverse of parse_dataset; values written in shortest round-trip form.
inline void write_dataset(std::ostream& out, const Dataset& ds, const LabelTable& table = LabelTable{}) {
  char buf[64];
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (double v : ds.row(i)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, end - buf);
      out.put(',');
    }
    out << table.token_for(ds.labels()[i]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sensor arcs

inline constexpr std::size_t kFullSensors = 24;
inline constexpr double kSensorSpacingDegrees = 15.0;
inline constexpr double kArcDegrees = 60.0;
// A 60 degree arc at 15 degree spacing covers at most 5 consecutive sensors.
inline constexpr std::size_t kMaxArcSensors =
    static_cast<std::size_t>(kArcDegrees / kSensorSpacingDegrees) + 1;

enum class Direction : std::size_t { Front = 0, Left = 1, Right = 2, Back = 3 };
inline constexpr std::array<std::string_view, 4> kDirectionNames{"front", "left", "right", "back"};

// Contiguous window of sensors with circular wraparound.
struct SensorArc {
  std::size_t start = 0;
  std::size_t length = 0;

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out(length);
    for (std::size_t k = 0; k < length; ++k) out[k] = (start + k) % kFullSensors;
    return out;
  }

  bool contains(std::size_t sensor) const noexcept {
    return (sensor + kFullSensors - start) % kFullSensors < length;
  }

  bool contains(const SensorArc& other) const noexcept {
    for (std::size_t k = 0; k < other.length; ++k)
      if (!contains((other.start + k) % kFullSensors)) return false;
    return true;
  }

  friend bool operator==(const SensorArc&, const SensorArc&) = default;
};

inline std::string to_string(const SensorArc& arc) {
  std::string s = "{";
  const auto idx = arc.indices();
  for (std::size_t k = 0; k < idx.size(); ++k) s += (k ? "," : "") + std::to_string(idx[k]);
  return s + "}";
}

// Which full-width sensors feed each simplified feature, in the order
// (front, left, right, back).
struct ArcMap {
  std::array<SensorArc, 4> arcs{};

  const SensorArc& operator[](Direction d) const noexcept { return arcs[static_cast<std::size_t>(d)]; }

  void validate() const {
    for (std::size_t k = 0; k < arcs.size(); ++k) {
      const auto& a = arcs[k];
      if (a.length == 0 || a.length > kMaxArcSensors || a.start >= kFullSensors)
        throw DataError("invalid arc for " + std::string(kDirectionNames[k]) + ": " + to_string(a));
    }
  }

  friend bool operator==(const ArcMap&, const ArcMap&) = default;
};

class ArcCalibrationError : public DataError {
 public:
  using DataError::DataError;
};

inline double arc_minimum(std::span<const double> row, const SensorArc& arc) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < arc.length; ++k) m = std::min(m, row[(arc.start + k) % kFullSensors]);
  return m;
}

// Recovers the arc map by exact-match search over contiguous 4- and
// 5-sensor windows. When several windows reproduce a column and one of them
// contains all the others, the containing window is taken (extra sensors
// that are never the minimum are indistinguishable); any other multiplicity
// is ambiguous.
inline ArcMap calibrate_arc_map(const Dataset& full, const Dataset& published4) {
  if (full.width() != Width::Full24 || published4.width() != Width::Simplified4)
    throw DataError("calibrate_arc_map needs a 24-sensor and a 4-sensor dataset");
  if (full.rows() != published4.rows())
    throw DataError("row counts differ: " + std::to_string(full.rows()) + " vs " +
                    std::to_string(published4.rows()));
  if (full.labels() != published4.labels()) throw DataError("label sequences differ between files");

  ArcMap map;
  for (std::size_t dir = 0; dir < 4; ++dir) {
    std::vector<SensorArc> matches;
    for (std::size_t length : {std::size_t{4}, kMaxArcSensors}) {
      for (std::size_t start = 0; start < kFullSensors; ++start) {
        const SensorArc arc{start, length};
        bool ok = true;
        for (std::size_t r = 0; r < full.rows() && ok; ++r)
          ok = arc_minimum(full.row(r), arc) == published4.features()(static_cast<Eigen::Index>(r),
                                                                      static_cast<Eigen::Index>(dir));
        if (ok) matches.push_back(arc);
      }
    }
    const std::string name(kDirectionNames[dir]);
    if (matches.empty())
      throw ArcCalibrationError("no sensor window reproduces the " + name + " column");
    auto widest = std::find_if(matches.begin(), matches.end(), [&](const SensorArc& cand) {
      return std::all_of(matches.begin(), matches.end(),
                         [&](const SensorArc& other) { return cand.contains(other); });
    });
    if (widest == matches.end()) {
      const auto& a = matches.front();
      const auto& b = *std::find_if(matches.begin(), matches.end(), [&](const SensorArc& o) {
        return !a.contains(o) && !o.contains(a);
      });
      throw ArcCalibrationError("ambiguous " + name + " arc: " + to_string(a) + " and " + to_string(b) +
                                " both reproduce the published column (" +
                                std::to_string(matches.size()) + " candidate windows)");
    }
    map.arcs[dir] = *widest;
  }
  return map;
}

inline Dataset derive_simplified4(const Dataset& full, const ArcMap& map) {
  if (full.width() != Width::Full24) throw DataError("derive_simplified4 needs a 24-sensor dataset");
  map.validate();
  Matrix x(static_cast<Eigen::Index>(full.rows()), 4);
  for (std::size_t r = 0; r < full.rows(); ++r)
    for (std::size_t dir = 0; dir < 4; ++dir)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(dir)) =
          arc_minimum(full.row(r), map.arcs[dir]);
  return Dataset(std::move(x), full.labels(), Width::Simplified4);
}

// Keeps (front, left): feature 0 is the front sensor, feature 1 the left.
inline Dataset derive_simplified2(const Dataset& four) {
  if (four.width() != Width::Simplified4) throw DataError("derive_simplified2 needs a 4-sensor dataset");
  Matrix x = four.features().leftCols(2);
  return Dataset(std::move(x), four.labels(), Width::Simplified2);
}

// Number of feature cells that differ (plus rows whose labels differ).
inline std::size_t count_mismatches(const Dataset& a, const Dataset& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    return std::max(a.rows() * a.cols(), b.rows() * b.cols());
  std::size_t bad = 0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c)
      bad += a.features()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) !=
             b.features()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    bad += a.labels()[r] != b.labels()[r];
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Splits and standardization

struct SplitPair {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
};

// Test set is ceil(n/10) rows, the rest train: 4910/546 on 5456 rows.
constexpr std::size_t test_size_for(std::size_t n) noexcept { return (n + 9) / 10; }

inline SplitPair shuffle_split(std::size_t n, std::uint64_t seed) {
  if (n < 11) throw DataError("dataset too small for 10:1 split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_train = n - test_size_for(n);
  SplitPair split;
  split.seed = seed;
  split.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return split;
}

inline SplitPair shuffle_split(const Dataset& ds, std::uint64_t seed) { return shuffle_split(ds.rows(), seed); }

inline constexpr double kStdFloor = 1e-8;

struct StandardizationStats {
  Vector mean;
  Vector std;  // already floored
  double floor = kStdFloor;

  Matrix apply(const Matrix& x) const {
    Matrix out = x;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      out.col(c) = (out.col(c).array() - mean(c)) / std(c);
    return out;
  }
};

// Statistics use the training rows only; std is the (n-1) sample deviation.
inline StandardizationStats fit_standardization(const Matrix& train, double floor = kStdFloor) {
  const auto n = train.rows();
  StandardizationStats s;
  s.floor = floor;
  s.mean = train.colwise().mean().transpose();
  s.std.resize(train.cols());
  for (Eigen::Index c = 0; c < train.cols(); ++c) {
    const double ss = (train.col(c).array() - s.mean(c)).square().sum();
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    s.std(c) = std::max(sd, floor);
  }
  return s;
}

struct Standardized {
  Matrix train;
  Matrix other;
  StandardizationStats stats;
};

inline Standardized standardize(const Matrix& train, const Matrix& other) {
  if (train.cols() != other.cols()) throw DataError("standardize: column counts differ");
  auto stats = fit_standardization(train);
  return {stats.apply(train), stats.apply(other), std::move(stats)};
}

}  // namespace wfr
