#pragma once

// Versioned text container for trained models.
//
//   wfr-model <version> <kind>
//   <whitespace separated tokens>
//   end
//
// Reals are written as C99 hex floats, so a save/load cycle is lossless.
// Integers are decimal. Layout per kind is the order of the write_* calls
// below; readers reject unknown versions and kinds.

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <system_error>

#include "wfr/boosting.hpp"
#include "wfr/forest.hpp"
#include "wfr/gnb.hpp"
#include "wfr/knn.hpp"
#include "wfr/lda.hpp"
#include "wfr/neural.hpp"
#include "wfr/svm.hpp"
#include "wfr/tree.hpp"

namespace wfr::io {

inline constexpr int kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  Writer& real(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    out_ << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    return *this;
  }
  Writer& integer(long long v) {
    out_ << ' ' << v;
    return *this;
  }
  Writer& word(std::string_view w) {
    out_ << ' ' << w;
    return *this;
  }
  Writer& newline() {
    out_ << '\n';
    return *this;
  }
  template <typename Derived>
  Writer& matrix(const Eigen::DenseBase<Derived>& m) {
    integer(m.rows()).integer(m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) real(m(r, c));
    return newline();
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw FormatError("unexpected end of model file");
    return w;
  }
  void expect(std::string_view w) {
    const auto got = word();
    if (got != w) throw FormatError("expected '" + std::string(w) + "', found '" + got + "'");
  }
  double real() {
    const auto w = word();
    double v = 0.0;
    const char* first = w.data();
    const char* last = w.data() + w.size();
    bool negative = false;
    if (first != last && *first == '-') negative = true, ++first;
    auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::hex);
    if (ec != std::errc() || ptr != last) {
      // inf / nan are written in decimal spelling by to_chars.
      auto [p2, e2] = std::from_chars(w.data(), last, v);
      if (e2 != std::errc() || p2 != last) throw FormatError("bad real '" + w + "'");
      return v;
    }
    return negative ? -v : v;
  }
  long long integer() {
    const auto w = word();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size()) throw FormatError("bad integer '" + w + "'");
    return v;
  }
  std::size_t size() {
    const auto v = integer();
    if (v < 0) throw FormatError("negative size");
    return static_cast<std::size_t>(v);
  }
  template <typename M>
  M matrix() {
    const auto r = static_cast<Eigen::Index>(size());
    const auto c = static_cast<Eigen::Index>(size());
    M m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = real();
    return m;
  }
  Vector vector() {
    Eigen::MatrixXd m = matrix<Eigen::MatrixXd>();
    if (m.cols() != 1) throw FormatError("expected a column vector");
    return m.col(0);
  }

 private:
  std::istream& in_;
};

inline void write_header(std::ostream& out, std::string_view kind) {
  out << "wfr-model " << kFormatVersion << ' ' << kind << '\n';
}

inline void read_header(Reader& in, std::string_view kind) {
  in.expect("wfr-model");
  const auto version = in.integer();
  if (version != kFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version));
  in.expect(kind);
}

// --- trees -----------------------------------------------------------------

inline void write_tree_body(Writer& w, const Tree& t) {
  w.word("tree").integer(static_cast<long long>(t.n_features())).integer(static_cast<long long>(t.nodes().size())).newline();
  for (const auto& n : t.nodes()) {
    w.integer(n.feature).real(n.threshold).integer(n.left).integer(n.right);
    for (auto c : n.counts) w.integer(c);
    w.real(n.value).newline();
  }
}

inline Tree read_tree_body(Reader& r) {
  r.expect("tree");
  const auto features = r.size();
  const auto count = r.size();
  std::vector<TreeNode> nodes(count);
  for (auto& n : nodes) {
    n.feature = static_cast<std::int32_t>(r.integer());
    n.threshold = r.real();
    n.left = static_cast<std::uint32_t>(r.size());
    n.right = static_cast<std::uint32_t>(r.size());
    for (auto& c : n.counts) c = static_cast<std::uint32_t>(r.size());
    n.value = r.real();
    if (!n.is_leaf() && (n.left >= count || n.right >= count || static_cast<std::size_t>(n.feature) >= features))
      throw FormatError("tree node references out of range");
  }
  return Tree(std::move(nodes), features);
}

inline void save(std::ostream& out, const Tree& t) {
  write_header(out, "decision_tree");
  Writer w(out);
  write_tree_body(w, t);
  out << "end\n";
}

inline void save(std::ostream& out, const ForestModel& f) {
  write_header(out, "random_forest");
  Writer w(out);
  w.integer(static_cast<long long>(f.trees.size())).integer(static_cast<long long>(f.max_features)).newline();
  for (std::size_t t = 0; t < f.trees.size(); ++t) {
    w.word("seed").integer(static_cast<long long>(f.tree_seeds[t])).newline();
    write_tree_body(w, f.trees[t]);
  }
  out << "end\n";
}

inline void save(std::ostream& out, const BoostModel& b) {
  write_header(out, "gradient_boost");
  Writer w(out);
  w.real(b.learning_rate).integer(static_cast<long long>(b.stages.size()));
  for (double v : b.initial) w.real(v);
  w.newline();
  for (const auto& stage : b.stages)
    for (const auto& t : stage) write_tree_body(w, t);
  out << "end\n";
}

// --- statistical models ----------------------------------------------------

inline void save(std::ostream& out, const LDAModel& m) {
  write_header(out, "lda");
  Writer w(out);
  for (double p : m.priors) w.real(p);
  w.newline();
  for (const auto& mu : m.means) w.matrix(mu);
  w.matrix(m.covariance);
  out << "end\n";
}

inline void save(std::ostream& out, const GNBModel& m) {
  write_header(out, "gnb");
  Writer w(out);
  w.real(m.smoothing);
  for (double p : m.priors) w.real(p);
  w.newline();
  for (std::size_t k = 0; k < kNumClasses; ++k) w.matrix(m.means[k]).matrix(m.variances[k]);
  out << "end\n";
}

inline void save(std::ostream& out, const KNNModel& m) {
  write_header(out, "knn");
  Writer w(out);
  w.integer(static_cast<long long>(m.k)).integer(static_cast<long long>(m.labels.size()));
  for (auto l : m.labels) w.integer(static_cast<long long>(class_index(l)));
  w.newline().matrix(m.train);
  out << "end\n";
}

inline void save(std::ostream& out, const SVMModel& m) {
  write_header(out, "svm");
  Writer w(out);
  w.real(m.gamma).real(m.C).newline();
  for (const auto& b : m.machines) {
    w.real(b.bias).integer(b.converged).integer(static_cast<long long>(b.iterations)).newline();
    w.matrix(b.coef).matrix(b.support_vectors);
  }
  out << "end\n";
}

// --- networks --------------------------------------------------------------

inline void save(std::ostream& out, const nn::NetworkModel& m) {
  write_header(out, "network");
  Writer w(out);
  w.word(m.preset).integer(static_cast<long long>(m.input_width)).integer(static_cast<long long>(m.layers.size())).newline();
  for (const auto& layer : m.layers) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, nn::SharedInputLayer>) {
            w.word("shared").integer(static_cast<int>(l.act)).newline().matrix(l.w).matrix(l.b);
          } else if constexpr (std::is_same_v<T, nn::DenseLayer>) {
            w.word("dense").integer(static_cast<int>(l.act)).newline().matrix(l.W).matrix(l.b);
          } else if constexpr (std::is_same_v<T, nn::BatchNormState>) {
            w.word("batchnorm").real(l.momentum).real(l.eps).newline();
            w.matrix(l.gamma).matrix(l.beta).matrix(l.running_mean).matrix(l.running_var);
          } else if constexpr (std::is_same_v<T, nn::ReLULayer>) {
            w.word("relu").newline();
          } else if constexpr (std::is_same_v<T, nn::DropoutLayer>) {
            w.word("dropout").real(l.rate).newline();
          }
        },
        layer);
  }
  out << "end\n";
}

template <typename Model>
Model load(std::istream& in);

template <>
inline Tree load<Tree>(std::istream& in) {
  Reader r(in);
  read_header(r, "decision_tree");
  auto t = read_tree_body(r);
  r.expect("end");
  return t;
}

template <>
inline ForestModel load<ForestModel>(std::istream& in) {
  Reader r(in);
  read_header(r, "random_forest");
  ForestModel f;
  const auto n = r.size();
  f.max_features = r.size();
  for (std::size_t t = 0; t < n; ++t) {
    r.expect("seed");
    f.tree_seeds.push_back(static_cast<std::uint64_t>(r.integer()));
    f.trees.push_back(read_tree_body(r));
  }
  r.expect("end");
  return f;
}

template <>
inline BoostModel load<BoostModel>(std::istream& in) {
  Reader r(in);
  read_header(r, "gradient_boost");
  BoostModel b;
  b.learning_rate = r.real();
  const auto stages = r.size();
  for (auto& v : b.initial) v = r.real();
  b.stages.resize(stages);
  for (auto& stage : b.stages)
    for (auto& t : stage) t = read_tree_body(r);
  r.expect("end");
  return b;
}

template <>
inline LDAModel load<LDAModel>(std::istream& in) {
  Reader r(in);
  read_header(r, "lda");
  std::array<double, kNumClasses> priors{};
  for (auto& p : priors) p = r.real();
  std::array<Vector, kNumClasses> means;
  for (auto& mu : means) mu = r.vector();
  Matrix cov = r.matrix<Matrix>();
  r.expect("end");
  return LDAModel::from_parameters(std::move(means), std::move(cov), priors);
}

template <>
inline GNBModel load<GNBModel>(std::istream& in) {
  Reader r(in);
  read_header(r, "gnb");
  GNBModel m;
  m.smoothing = r.real();
  for (auto& p : m.priors) p = r.real();
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    m.means[k] = r.vector();
    m.variances[k] = r.vector();
  }
  r.expect("end");
  return m;
}

template <>
inline KNNModel load<KNNModel>(std::istream& in) {
  Reader r(in);
  read_header(r, "knn");
  KNNModel m;
  m.k = r.size();
  const auto n = r.size();
  m.labels.resize(n);
  for (auto& l : m.labels) {
    const auto c = r.size();
    if (c >= kNumClasses) throw FormatError("bad class index");
    l = class_from_index(c);
  }
  m.train = r.matrix<Matrix>();
  r.expect("end");
  return m;
}

template <>
inline SVMModel load<SVMModel>(std::istream& in) {
  Reader r(in);
  read_header(r, "svm");
  SVMModel m;
  m.gamma = r.real();
  m.C = r.real();
  for (auto& b : m.machines) {
    b.bias = r.real();
    b.converged = r.integer() != 0;
    b.iterations = r.size();
    b.coef = r.vector();
    b.support_vectors = r.matrix<Matrix>();
  }
  r.expect("end");
  return m;
}

template <>
inline nn::NetworkModel load<nn::NetworkModel>(std::istream& in) {
  Reader r(in);
  read_header(r, "network");
  nn::NetworkModel m;
  m.preset = r.word();
  m.input_width = r.size();
  const auto count = r.size();
  for (std::size_t i = 0; i < count; ++i) {
    const auto kind = r.word();
    if (kind == "shared") {
      nn::SharedInputLayer l;
      l.act = static_cast<nn::Activation>(r.integer());
      l.w = r.vector();
      l.b = r.vector();
      m.layers.emplace_back(std::move(l));
    } else if (kind == "dense") {
      nn::DenseLayer l;
      l.act = static_cast<nn::Activation>(r.integer());
      l.W = r.matrix<Eigen::MatrixXd>();
      l.b = r.vector();
      m.layers.emplace_back(std::move(l));
    } else if (kind == "batchnorm") {
      nn::BatchNormState l;
      l.momentum = r.real();
      l.eps = r.real();
      l.gamma = r.vector();
      l.beta = r.vector();
      l.running_mean = r.vector();
      l.running_var = r.vector();
      m.layers.emplace_back(std::move(l));
    } else if (kind == "relu") {
      m.layers.emplace_back(nn::ReLULayer{});
    } else if (kind == "dropout") {
      m.layers.emplace_back(nn::DropoutLayer{r.real()});
    } else {
      throw FormatError("unknown layer kind '" + kind + "'");
    }
  }
  r.expect("end");
  return m;
}

}  // namespace wfr::io
