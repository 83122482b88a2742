#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wfr/boosting.hpp"
#include "wfr/dataset.hpp"
#include "wfr/forest.hpp"
#include "wfr/gnb.hpp"
#include "wfr/knn.hpp"
#include "wfr/lda.hpp"
#include "wfr/neural.hpp"
#include "wfr/parallel.hpp"
#include "wfr/svm.hpp"
#include "wfr/tree.hpp"

namespace wfr {

inline constexpr std::string_view kVersion = "1.0.0";

enum class Algorithm : std::uint8_t { DT, RFC, GBC, LDA, GNB, KNN, SVM, FNN1, DFNN3, DFNN_WS };

inline constexpr std::array<Algorithm, 10> kAllAlgorithms{
    Algorithm::DT,  Algorithm::GBC,  Algorithm::RFC,   Algorithm::LDA,    Algorithm::SVM,
    Algorithm::KNN, Algorithm::GNB,  Algorithm::FNN1,  Algorithm::DFNN3,  Algorithm::DFNN_WS};

inline std::string_view algorithm_tag(Algorithm a) {
  switch (a) {
    case Algorithm::DT: return "DT";
    case Algorithm::RFC: return "RFC";
    case Algorithm::GBC: return "GBC";
    case Algorithm::LDA: return "LDA";
    case Algorithm::GNB: return "GNB";
    case Algorithm::KNN: return "KNN";
    case Algorithm::SVM: return "SVM";
    case Algorithm::FNN1: return "FNN1";
    case Algorithm::DFNN3: return "DFNN3";
    case Algorithm::DFNN_WS: return "DFNN_WS";
  }
  return "?";
}

inline std::string_view algorithm_title(Algorithm a) {
  switch (a) {
    case Algorithm::DT: return "Decision Tree (DT)";
    case Algorithm::RFC: return "Random Forest Classifier (RFC)";
    case Algorithm::GBC: return "Gradient Boost Classifier (GBC)";
    case Algorithm::LDA: return "Linear Discriminant Analysis (LDA)";
    case Algorithm::GNB: return "Gaussian Naive Bayes (GNB)";
    case Algorithm::KNN: return "K-Nearest Neighbour (KNN)";
    case Algorithm::SVM: return "Support Vector Machine (SVM)";
    case Algorithm::FNN1: return "FNN (1 Hidden Layer)";
    case Algorithm::DFNN3: return "DFNN (3 Hidden Layers)";
    case Algorithm::DFNN_WS: return "DFNN with Weight Sharing";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view tag) {
  std::string t(tag);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto a : kAllAlgorithms)
    if (algorithm_tag(a) == t) return a;
  return std::nullopt;
}

constexpr bool is_neural(Algorithm a) {
  return a == Algorithm::FNN1 || a == Algorithm::DFNN3 || a == Algorithm::DFNN_WS;
}

inline nn::Preset preset_for(Algorithm a) {
  switch (a) {
    case Algorithm::FNN1: return nn::Preset::FNN1;
    case Algorithm::DFNN3: return nn::Preset::DFNN3;
    case Algorithm::DFNN_WS: return nn::Preset::DFNN_WS;
    default: throw std::invalid_argument("not a neural algorithm");
  }
}

struct Hyperparameters {
  TreeParams tree;
  ForestParams forest;
  BoostParams boost;
  std::size_t knn_k = kDefaultNeighbours;
  SvmParams svm;
  nn::TrainConfig net;
};

struct ModelSpec {
  Algorithm algorithm = Algorithm::DT;
  Width width = Width::Full24;
  Hyperparameters hp;

  // Hyperparameters relevant to this algorithm, as `key=value` pairs.
  std::string describe() const {
    std::ostringstream s;
    auto depth = [](const std::optional<std::size_t>& d) { return d ? std::to_string(*d) : std::string("none"); };
    switch (algorithm) {
      case Algorithm::DT:
        s << "criterion=gini max_depth=" << depth(hp.tree.max_depth)
          << " min_samples_split=" << hp.tree.min_samples_split;
        if (!hp.tree.allowed_features.empty()) {
          s << " features=";
          for (std::size_t i = 0; i < hp.tree.allowed_features.size(); ++i)
            s << (i ? "," : "") << hp.tree.allowed_features[i];
        }
        break;
      case Algorithm::RFC:
        s << "n_trees=" << hp.forest.n_trees << " max_features="
          << hp.forest.max_features.value_or(default_max_features(width_columns(width)))
          << " bootstrap=" << (hp.forest.bootstrap ? "on" : "off") << " vote=majority";
        break;
      case Algorithm::GBC:
        s << "stages=" << hp.boost.stages << " learning_rate=" << hp.boost.learning_rate
          << " max_depth=" << hp.boost.max_depth << " loss=multinomial_deviance";
        break;
      case Algorithm::LDA: s << "ridge=" << kLdaRidge << "*trace/d"; break;
      case Algorithm::GNB: s << "var_smoothing=" << kGnbSmoothing << "*max_var"; break;
      case Algorithm::KNN: s << "k=" << hp.knn_k << " metric=euclidean"; break;
      case Algorithm::SVM:
        s << "kernel=rbf C=" << hp.svm.C << " gamma="
          << (hp.svm.gamma ? std::to_string(*hp.svm.gamma) : std::string("1/(d*mean_var)"))
          << " tol=" << hp.svm.tolerance << " multiclass=one-vs-rest";
        break;
      case Algorithm::FNN1:
      case Algorithm::DFNN3:
      case Algorithm::DFNN_WS:
        s << "preset=" << algorithm_tag(algorithm) << " batch=" << hp.net.batch_size << " epochs=" << hp.net.epochs
          << " dropout=" << hp.net.dropout << " optimizer=adadelta(rho=0.95,eps=1e-6) standardize=train-stats";
        break;
    }
    return s.str();
  }
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double accuracy(std::span<const ClassLabel> predicted, std::span<const ClassLabel> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

struct FitOutcome {
  std::vector<ClassLabel> predictions;
  bool converged = true;
};

template <typename Model>
std::vector<ClassLabel> predict_rows(const Model& model, const Matrix& x) {
  std::vector<ClassLabel> out(static_cast<std::size_t>(x.rows()));
  const auto d = static_cast<std::size_t>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    out[static_cast<std::size_t>(r)] = model.predict(std::span<const double>(x.data() + static_cast<std::size_t>(r) * d, d));
  return out;
}

// Trains `spec` on `train` and predicts `test`. Neural specs standardize with
// training statistics first; classic models see raw sensor distances.
inline FitOutcome fit_and_predict(const ModelSpec& spec, const Dataset& train, const Dataset& test,
                                  std::uint64_t seed) {
  const Matrix& x = train.features();
  const auto& y = train.labels();
  const Matrix& xt = test.features();
  FitOutcome out;
  switch (spec.algorithm) {
    case Algorithm::DT: out.predictions = predict_rows(fit_decision_tree(x, y, spec.hp.tree, seed), xt); break;
    case Algorithm::RFC: out.predictions = predict_rows(fit_random_forest(x, y, spec.hp.forest, seed), xt); break;
    case Algorithm::GBC: out.predictions = predict_rows(fit_gradient_boost(x, y, spec.hp.boost, seed), xt); break;
    case Algorithm::LDA: out.predictions = predict_rows(fit_lda(x, y), xt); break;
    case Algorithm::GNB: out.predictions = predict_rows(fit_gnb(x, y), xt); break;
    case Algorithm::KNN: out.predictions = predict_rows(fit_knn(x, y, spec.hp.knn_k), xt); break;
    case Algorithm::SVM: {
      const auto model = fit_svm(x, y, spec.hp.svm, seed);
      out.converged = model.converged();
      out.predictions = predict_rows(model, xt);
      break;
    }
    case Algorithm::FNN1:
    case Algorithm::DFNN3:
    case Algorithm::DFNN_WS: {
      const auto scaled = standardize(x, xt);
      auto net = nn::build_preset(preset_for(spec.algorithm), train.cols(), derive_seed(seed, 1));
      auto cfg = spec.hp.net;
      cfg.seed = derive_seed(seed, 2);
      net = nn::train_network(std::move(net), scaled.train, y, cfg);
      out.predictions = nn::predict_all(net, scaled.other);
      break;
    }
  }
  return out;
}

struct CVConfig {
  std::size_t iterations = 50;
  std::uint64_t master_seed = 42;
  std::size_t jobs = 1;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  }
};

inline std::uint64_t iteration_seed(std::uint64_t master, std::size_t iteration) {
  return derive_seed(master, iteration);
}

struct IterationResult {
  std::size_t iteration = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double seconds = 0.0;
  bool converged = true;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) deviation; 0 for one value
};

inline Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

struct CellResult {
  ModelSpec spec;
  std::vector<IterationResult> iterations;
  Summary summary;
  std::optional<std::string> error;

  std::vector<double> accuracies() const {
    std::vector<double> out;
    for (const auto& it : iterations) out.push_back(it.accuracy);
    return out;
  }
  bool converged() const {
    return std::all_of(iterations.begin(), iterations.end(), [](const IterationResult& r) { return r.converged; });
  }
};

using ProgressFn = std::function<void(const std::string&)>;

// Monte-Carlo cross-validation: for every iteration, a seed derived from the
// master seed drives a fresh shuffle-split, the model is fit on the training
// rows and scored on the held-out rows. Iterations are independent, so any
// `jobs` value yields the same series.
inline CellResult monte_carlo(const ModelSpec& spec, const Dataset& ds, const CVConfig& cfg) {
  cfg.validate();
  if (ds.width() != spec.width) throw EvaluationError("dataset width does not match model spec");
  CellResult cell;
  cell.spec = spec;
  cell.iterations.resize(cfg.iterations);
  parallel_for(cfg.iterations, cfg.jobs, [&](std::size_t i) {
    const auto seed = iteration_seed(cfg.master_seed, i);
    const auto start = std::chrono::steady_clock::now();
    const auto split = shuffle_split(ds, seed);
    const auto train = ds.subset(split.train_indices);
    const auto test = ds.subset(split.test_indices);
    FitOutcome fit;
    try {
      fit = fit_and_predict(spec, train, test, derive_seed(seed, 1));
    } catch (const std::exception& e) {
      throw EvaluationError(std::string(algorithm_tag(spec.algorithm)) + "/" +
                            std::to_string(width_columns(spec.width)) + " iteration " + std::to_string(i) +
                            " (seed " + std::to_string(seed) + "): " + e.what());
    }
    auto& r = cell.iterations[i];
    r.iteration = i;
    r.seed = seed;
    r.accuracy = accuracy(fit.predictions, test.labels());
    r.converged = fit.converged;
    r.train_size = split.train_indices.size();
    r.test_size = split.test_indices.size();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  const auto acc = cell.accuracies();
  cell.summary = summarize(acc);
  return cell;
}

// ---------------------------------------------------------------------------
// Report tables

struct BenchmarkReport {
  CVConfig config;
  std::vector<CellResult> cells;

  const CellResult* find(Algorithm a, Width w) const {
    for (const auto& c : cells)
      if (c.spec.algorithm == a && c.spec.width == w) return &c;
    return nullptr;
  }
};

struct DatasetSet {
  std::map<Width, Dataset> by_width;

  const Dataset* get(Width w) const {
    auto it = by_width.find(w);
    return it == by_width.end() ? nullptr : &it->second;
  }
};

// Runs every (model, width) pair. A failing cell records its error and the
// remaining cells still run.
inline BenchmarkReport run_table1(const DatasetSet& data, const CVConfig& cfg, std::span<const Algorithm> models,
                                  std::span<const Width> widths = kAllWidths, const Hyperparameters& hp = {},
                                  const ProgressFn& progress = {}) {
  BenchmarkReport report;
  report.config = cfg;
  for (auto a : models) {
    for (auto w : widths) {
      ModelSpec spec{a, w, hp};
      const auto* ds = data.get(w);
      if (!ds) {
        CellResult cell;
        cell.spec = spec;
        cell.error = "no dataset for width " + std::to_string(width_columns(w));
        report.cells.push_back(std::move(cell));
        continue;
      }
      try {
        report.cells.push_back(monte_carlo(spec, *ds, cfg));
      } catch (const std::exception& e) {
        CellResult cell;
        cell.spec = spec;
        cell.error = e.what();
        report.cells.push_back(std::move(cell));
      }
      if (progress) {
        const auto& c = report.cells.back();
        std::ostringstream msg;
        msg << algorithm_tag(a) << " / " << width_columns(w) << " sensors: ";
        if (c.error) msg << "FAILED (" << *c.error << ")";
        else msg << std::fixed << std::setprecision(2) << 100.0 * c.summary.mean << "%";
        progress(msg.str());
      }
    }
  }
  return report;
}

inline std::string percent(double fraction) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * fraction << "%";
  return s.str();
}

// Published mean accuracies (percent) for widths 24 / 4 / 2.
struct PublishedRow {
  std::string_view model;
  std::optional<Algorithm> algorithm;  // unset: not reproduced
  std::array<double, 3> accuracy;
};

inline constexpr std::array<PublishedRow, 5> kPublishedDeep{{
    {"DFNN with Weight Sharing", Algorithm::DFNN_WS, {98.1, 96.8, 95.7}},
    {"DFNN (3 Hidden Layers)", Algorithm::DFNN3, {96.4, 92.5, 90.6}},
    {"FNN (1 Hidden Layer)", Algorithm::FNN1, {94.14, 90.1, 88.3}},
    {"Gated Recurrent Unit (GRU)", std::nullopt, {94.69, 96.52, 95.05}},
    {"Long Short Term Memory (LSTM)", std::nullopt, {94.13, 96.15, 94.87}},
}};

inline constexpr std::array<PublishedRow, 7> kPublishedClassic{{
    {"Decision Tree (DT)", Algorithm::DT, {99.52, 100.0, 100.0}},
    {"Gradient Boost Classifier (GBC)", Algorithm::GBC, {99.82, 99.94, 99.96}},
    {"Random Forest Classifier (RFC)", Algorithm::RFC, {99.42, 99.93, 99.97}},
    {"Linear Discriminant Analysis (LDA)", Algorithm::LDA, {65.85, 71.31, 70.65}},
    {"Support Vector Machine (SVM)", Algorithm::SVM, {90.36, 92.60, 93.75}},
    {"K-Nearest Neighbour (KNN)", Algorithm::KNN, {86.83, 96.45, 98.43}},
    {"Gaussian Naive Bayes (GNB)", Algorithm::GNB, {52.78, 89.10, 90.61}},
}};

inline std::optional<double> published_accuracy(Algorithm a, Width w) {
  const std::size_t col = w == Width::Full24 ? 0 : (w == Width::Simplified4 ? 1 : 2);
  for (const auto& r : kPublishedDeep)
    if (r.algorithm == a) return r.accuracy[col];
  for (const auto& r : kPublishedClassic)
    if (r.algorithm == a) return r.accuracy[col];
  return std::nullopt;
}

inline constexpr std::string_view kOutOfScope = "out of scope";

// Markdown table mirroring the published layout: deep models first, then
// classic models, one column per sensor width. Recurrent rows are marked out
// of scope: the per-sample data carries no sequence protocol to reproduce.
inline std::string render_table1(const BenchmarkReport& report) {
  std::ostringstream out;
  auto section = [&](std::string_view title, auto rows) {
    out << "| " << title << " | Mean Accuracy (24 Sensors) | Mean Accuracy (4 Sensors) | Mean Accuracy (2 Sensors) |\n";
    out << "|---|---|---|---|\n";
    for (const auto& row : rows) {
      out << "| " << row.model;
      for (std::size_t c = 0; c < 3; ++c) {
        out << " | ";
        if (!row.algorithm) {
          out << kOutOfScope;
          continue;
        }
        const auto* cell = report.find(*row.algorithm, kAllWidths[c]);
        if (!cell) out << "not run";
        else if (cell->error) out << "failed";
        else {
          out << percent(cell->summary.mean);
          if (!cell->converged()) out << " (unconverged)";
        }
      }
      out << " |\n";
    }
    out << "\n";
  };
  section("Deep Learning Models", kPublishedDeep);
  section("Machine Learning Models", kPublishedClassic);
  return out.str();
}

// Same layout with published values beside each reproduced mean.
inline std::string render_comparison(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "| Model | Width | Reproduced mean | Std | Published | Difference (points) |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& cell : report.cells) {
    out << "| " << algorithm_title(cell.spec.algorithm) << " | " << width_columns(cell.spec.width) << " | ";
    const auto pub = published_accuracy(cell.spec.algorithm, cell.spec.width);
    if (cell.error) {
      out << "failed | | " << (pub ? percent(*pub / 100.0) : "") << " | |\n";
      continue;
    }
    out << percent(cell.summary.mean) << " | " << std::fixed << std::setprecision(2) << 100.0 * cell.summary.stddev
        << " | ";
    if (pub) {
      out << percent(*pub / 100.0) << " | " << std::showpos << std::fixed << std::setprecision(2)
          << 100.0 * cell.summary.mean - *pub << std::noshowpos;
    } else {
      out << " | ";
    }
    out << " |\n";
  }
  return out.str();
}

struct PriorWork {
  std::string_view source;
  std::string_view model;
  std::string_view accuracy;
  bool split;
};

inline constexpr std::array<PriorWork, 4> kPriorWork2{{
    {"Chen et al. 2013", "Particle swarm optimization", "98.8%", true},
    {"Freire et al. 2009", "Multi Layer Perceptron (Neural Network)", "97.59%", false},
    {"Dash et al. 2014", "Shallow Neural Network", "92.67%", false},
    {"Freire et al. 2009", "Elman Recurrent", "96.42%", false},
}};
inline constexpr std::array<PriorWork, 3> kPriorWork4{{
    {"Osunmakinde et al. 2012", "Bayesian Network", "93.3%", true},
    {"Dash 2015", "Adaptive Resonance Theory-1", "86.69%", true},
    {"Dash et al. 2014", "Shallow Neural Network", "81.32%", false},
}};
inline constexpr std::array<PriorWork, 4> kPriorWork24{{
    {"Karakus and Orhan 2013", "Probabilistic Neural Network", "99.63%", true},
    {"Dash 2015", "Adaptive Resonance Theory-1", "99.59%", true},
    {"Chen et al. 2013", "Particle swarm optimization", "< 80%", true},
    {"Dash, Nayak and Swain 2015", "Shallow Neural Network", "69.72%", false},
}};

// Comparison with previously published models on the same data. Needs the
// DT cells for widths 2 and 4 and the GBC cell for width 24.
inline std::string render_table2(const BenchmarkReport& report) {
  struct Section {
    std::string_view title;
    Algorithm algorithm;
    Width width;
    std::span<const PriorWork> prior;
  };
  const std::array<Section, 3> sections{{
      {"2 Sensors Dataset", Algorithm::DT, Width::Simplified2, kPriorWork2},
      {"4 Sensors Dataset", Algorithm::DT, Width::Simplified4, kPriorWork4},
      {"24 Sensors Dataset", Algorithm::GBC, Width::Full24, kPriorWork24},
  }};
  std::vector<std::string> missing;
  for (const auto& s : sections) {
    const auto* c = report.find(s.algorithm, s.width);
    if (!c || c->error)
      missing.push_back(std::string(algorithm_tag(s.algorithm)) + "/" + std::to_string(width_columns(s.width)));
  }
  if (!missing.empty()) {
    std::string msg = "render_table2: missing cells";
    for (const auto& m : missing) msg += " " + m;
    throw EvaluationError(msg);
  }
  std::ostringstream out;
  for (const auto& s : sections) {
    const auto* c = report.find(s.algorithm, s.width);
    out << "### " << s.title << "\n\n";
    out << "| Source | Model Description | Accuracy | Train/Test Split |\n|---|---|---|---|\n";
    out << "| This repository | " << algorithm_title(s.algorithm) << " | " << percent(c->summary.mean) << " | ✓ |\n";
    for (const auto& p : s.prior)
      out << "| " << p.source << " | " << p.model << " | " << p.accuracy << " | " << (p.split ? "✓" : "✗") << " |\n";
    out << "\n";
  }
  return out.str();
}

// Machine-readable series: one line per (cell, iteration). Contains no
// timing so reruns with the same flags are byte-identical.
inline void write_results_csv(std::ostream& out, const BenchmarkReport& report) {
  out << "model,width,iteration,seed,accuracy\n";
  for (const auto& cell : report.cells) {
    for (const auto& it : cell.iterations) {
      out << algorithm_tag(cell.spec.algorithm) << ',' << width_columns(cell.spec.width) << ',' << it.iteration
          << ',' << it.seed << ',' << format_real(it.accuracy) << '\n';
    }
  }
}

// Human-readable summary: both tables plus the configuration needed to rerun
// any cell (seeds, hyperparameters, version) and timings.
inline std::string render_summary(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "# Wall-following benchmark\n\n";
  out << "- version: " << kVersion << "\n";
  out << "- protocol: Monte-Carlo cross-validation, " << report.config.iterations
      << " iterations, 90/10 shuffle-split (ceil(n/10) test rows)\n";
  out << "- master seed: " << report.config.master_seed
      << " (iteration i uses splitmix64(master ^ i))\n\n";
  out << "## Mean accuracy\n\n" << render_table1(report);
  out << "## Reproduced vs published\n\n" << render_comparison(report) << "\n";
  try {
    const auto t2 = render_table2(report);
    out << "## Comparison with previous designs\n\n" << t2;
  } catch (const EvaluationError&) {
  }
  out << "## Configuration\n\n| Model | Width | Hyperparameters | Converged | Seconds / iteration |\n|---|---|---|---|---|\n";
  for (const auto& cell : report.cells) {
    double secs = 0.0;
    for (const auto& it : cell.iterations) secs += it.seconds;
    if (!cell.iterations.empty()) secs /= static_cast<double>(cell.iterations.size());
    out << "| " << algorithm_tag(cell.spec.algorithm) << " | " << width_columns(cell.spec.width) << " | "
        << cell.spec.describe() << " | " << (cell.error ? "error: " + *cell.error : (cell.converged() ? "yes" : "no"))
        << " | " << std::fixed << std::setprecision(3) << secs << " |\n";
  }
  return out.str();
}

}  // namespace wfr
