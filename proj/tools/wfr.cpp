// wfr: data preparation, Monte-Carlo benchmarks and tree export for the
// wall-following robot navigation datasets.
//
// Exit status: 0 success, 2 usage error, 3 data error, 4 execution error.

#include <curl/curl.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wfr/dataset.hpp"
#include "wfr/evaluation.hpp"
#include "wfr/tree.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kUsage = 2, kData = 3, kExecution = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExecutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::size_t kPublishedRows = 5456;
constexpr const char* kBaseUrl = "https://archive.ics.uci.edu/ml/machine-learning-databases/00194/";

std::string file_name(wfr::Width w) { return "sensor_readings_" + std::to_string(wfr::width_columns(w)) + ".data"; }

struct RunConfig {
  std::string data_dir = "data";
  std::uint64_t seed = 42;
  std::size_t iterations = 50;
  std::vector<std::string> models;
  std::vector<int> widths{24, 4, 2};
  std::size_t jobs = 1;
  std::string out;
  std::size_t epochs = 200;
  int width = 2;
  std::vector<std::string> restrict_to;
};

wfr::Dataset load(const RunConfig& cfg, wfr::Width w) {
  const fs::path p = fs::path(cfg.data_dir) / file_name(w);
  if (!fs::exists(p)) throw wfr::DataError(p.string() + ": not found (run `wfr data fetch`)");
  return wfr::load_dataset(p.string(), w);
}

wfr::Width parse_width(int columns) {
  const auto w = wfr::width_from_columns(static_cast<std::size_t>(columns < 0 ? 0 : columns));
  if (!w) throw UsageError("unknown width " + std::to_string(columns) + " (expected 24, 4 or 2)");
  return *w;
}

std::size_t write_body(char* ptr, std::size_t size, std::size_t n, void* user) {
  static_cast<std::ofstream*>(user)->write(ptr, static_cast<std::streamsize>(size * n));
  return size * n;
}

int cmd_fetch(const RunConfig& cfg) {
  fs::create_directories(cfg.data_dir);
  curl_global_init(CURL_GLOBAL_DEFAULT);
  int status = kOk;
  for (auto w : wfr::kAllWidths) {
    const auto name = file_name(w);
    const fs::path dest = fs::path(cfg.data_dir) / name;
    const fs::path part = dest.string() + ".part";
    const std::string url = kBaseUrl + name;
    std::ofstream out(part, std::ios::binary);
    if (!out) throw ExecutionError("cannot write " + part.string());
    CURL* curl = curl_easy_init();
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_body);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, &out);
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
    const CURLcode rc = curl_easy_perform(curl);
    curl_easy_cleanup(curl);
    out.close();
    if (rc != CURLE_OK) {
      std::cerr << "fetch " << url << ": " << curl_easy_strerror(rc) << '\n';
      fs::remove(part);
      status = kData;
      continue;
    }
    fs::rename(part, dest);
    std::cout << name << ": " << fs::file_size(dest) << " bytes\n";
  }
  curl_global_cleanup();
  return status;
}

int cmd_verify(const RunConfig& cfg) {
  std::ostringstream manifest;
  int status = kOk;
  for (auto w : wfr::kAllWidths) {
    const auto name = file_name(w);
    const fs::path p = fs::path(cfg.data_dir) / name;
    try {
      const auto ds = load(cfg, w);
      const auto bytes = fs::file_size(p);
      if (ds.rows() != kPublishedRows) {
        std::cerr << p.string() << ": " << ds.rows() << " rows, expected " << kPublishedRows << '\n';
        status = kData;
        continue;
      }
      std::cout << name << ": " << ds.rows() << " rows, " << bytes << " bytes\n";
      manifest << name << ' ' << ds.rows() << ' ' << bytes << '\n';
    } catch (const wfr::DataError& e) {
      std::cerr << e.what() << '\n';
      status = kData;
    }
  }
  if (status == kOk) {
    std::ofstream out(fs::path(cfg.data_dir) / "manifest.txt");
    out << manifest.str();
  }
  return status;
}

int cmd_derive(const RunConfig& cfg) {
  const auto full = load(cfg, wfr::Width::Full24);
  const auto four = load(cfg, wfr::Width::Simplified4);
  const auto two = load(cfg, wfr::Width::Simplified2);
  const auto map = wfr::calibrate_arc_map(full, four);
  for (std::size_t d = 0; d < 4; ++d)
    std::cout << wfr::kDirectionNames[d] << ": sensors " << wfr::to_string(map.arcs[d]) << '\n';
  const auto d4 = wfr::derive_simplified4(full, map);
  const auto d2 = wfr::derive_simplified2(d4);
  int status = kOk;
  auto report = [&](const wfr::Dataset& derived, const wfr::Dataset& published, wfr::Width w) {
    const auto bad = wfr::count_mismatches(derived, published);
    std::cout << wfr::width_columns(w) << "-sensor: ";
    if (bad == 0) {
      std::cout << "exact match\n";
    } else {
      std::cout << bad << " mismatched cells\n";
      status = kData;
    }
  };
  report(d4, four, wfr::Width::Simplified4);
  // The 2-sensor file might list left before front.
  const wfr::Dataset d2_swapped(d2.features().rowwise().reverse(), d2.labels(), wfr::Width::Simplified2);
  if (wfr::count_mismatches(d2, two) != 0 && wfr::count_mismatches(d2_swapped, two) == 0)
    std::cout << "2-sensor: exact match with column order (left, front)\n";
  else
    report(d2, two, wfr::Width::Simplified2);
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    for (const auto* ds : {&d4, &d2}) {
      std::ofstream out(fs::path(cfg.out) / file_name(ds->width()));
      wfr::write_dataset(out, *ds);
    }
  }
  return status;
}

std::vector<wfr::Algorithm> selected_models(const RunConfig& cfg) {
  std::vector<wfr::Algorithm> out;
  if (cfg.models.empty()) return {wfr::kAllAlgorithms.begin(), wfr::kAllAlgorithms.end()};
  for (const auto& tag : cfg.models) {
    const auto a = wfr::parse_algorithm(tag);
    if (!a) throw UsageError("unknown model tag '" + tag + "'");
    out.push_back(*a);
  }
  return out;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw ExecutionError("cannot write " + p.string());
}

int cmd_bench(const RunConfig& cfg) {
  const auto models = selected_models(cfg);
  std::vector<wfr::Width> widths;
  for (int c : cfg.widths) widths.push_back(parse_width(c));
  wfr::DatasetSet data;
  for (auto w : widths) data.by_width.emplace(w, load(cfg, w));

  wfr::CVConfig cv;
  cv.iterations = cfg.iterations;
  cv.master_seed = cfg.seed;
  cv.jobs = cfg.jobs;
  wfr::Hyperparameters hp;
  hp.net.epochs = cfg.epochs;
  const auto report = wfr::run_table1(data, cv, models, widths, hp,
                                      [](const std::string& line) { std::cerr << line << '\n'; });

  const fs::path out = cfg.out.empty() ? fs::path("results") : fs::path(cfg.out);
  fs::create_directories(out);
  std::ostringstream csv;
  wfr::write_results_csv(csv, report);
  write_file(out / "results.csv", csv.str());
  write_file(out / "summary.md", wfr::render_summary(report));
  std::cout << wfr::render_table1(report);
  for (const auto& c : report.cells)
    if (c.error) std::cerr << "error: " << *c.error << '\n';
  const bool failed = std::any_of(report.cells.begin(), report.cells.end(), [](const auto& c) { return c.error.has_value(); });
  return failed ? kExecution : kOk;
}

std::vector<std::size_t> restricted_features(const RunConfig& cfg, wfr::Width w) {
  std::vector<std::size_t> out;
  const auto d = wfr::width_columns(w);
  for (const auto& name : cfg.restrict_to) {
    std::size_t idx = d;
    if (w != wfr::Width::Full24) {
      for (std::size_t k = 0; k < d; ++k)
        if (wfr::kDirectionNames[k] == name) idx = k;
    }
    if (idx == d) {
      try {
        std::size_t pos = 0;
        idx = std::stoul(name, &pos);
        if (pos != name.size()) idx = d;
      } catch (const std::exception&) {
        idx = d;
      }
    }
    if (idx >= d) throw UsageError("unknown feature '" + name + "' for width " + std::to_string(d));
    out.push_back(idx);
  }
  return out;
}

int cmd_export_tree(const RunConfig& cfg) {
  const auto w = parse_width(cfg.width);
  wfr::TreeParams params;
  params.allowed_features = restricted_features(cfg, w);
  const auto ds = load(cfg, w);
  const auto split = wfr::shuffle_split(ds, wfr::iteration_seed(cfg.seed, 0));
  const auto train = ds.subset(split.train_indices);
  const auto test = ds.subset(split.test_indices);
  const auto tree = wfr::fit_decision_tree(train, params);
  const auto acc = wfr::accuracy(wfr::predict_all(tree, test.features()), test.labels());
  const fs::path out = cfg.out.empty() ? fs::path("tree_" + std::to_string(cfg.width) + ".dot") : fs::path(cfg.out);
  write_file(out, wfr::export_tree_text(tree, wfr::default_feature_names(ds.cols())));
  std::cout << "depth " << tree.depth() << ", " << tree.leaf_count() << " leaves, test accuracy "
            << wfr::percent(acc) << '\n';
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wall-following robot navigation benchmarks"};
  app.set_version_flag("--version", std::string(wfr::kVersion));
  app.require_subcommand(1);
  app.set_config("--config", "", "Read key=value defaults from a file; flags override it");

  RunConfig cfg;
  app.add_option("--data-dir", cfg.data_dir, "Directory holding sensor_readings_{24,4,2}.data")
      ->capture_default_str();

  auto* data = app.add_subcommand("data", "Fetch, verify or derive the datasets");
  data->require_subcommand(1);
  auto* fetch = data->add_subcommand("fetch", "Download the published files (only command using the network)");
  auto* verify = data->add_subcommand("verify", "Check row counts and parseability, write manifest.txt");
  auto* derive = data->add_subcommand("derive", "Recover the sensor arcs and compare with the simplified files");
  derive->add_option("--out", cfg.out, "Also write the derived files here");

  auto* bench = app.add_subcommand("bench", "Monte-Carlo cross-validation over models x widths");
  bench->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  bench->add_option("--iters", cfg.iterations, "Iterations per cell")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--models", cfg.models, "Model tags: DT RFC GBC LDA GNB KNN SVM FNN1 DFNN3 DFNN_WS")
      ->delimiter(',');
  bench->add_option("--widths", cfg.widths, "Sensor widths")->delimiter(',')->capture_default_str();
  bench->add_option("--jobs", cfg.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--out", cfg.out, "Report directory (default: results)");
  bench->add_option("--epochs", cfg.epochs, "Training epochs for neural models")
      ->check(CLI::PositiveNumber)->capture_default_str();

  auto* tree = app.add_subcommand("export-tree", "Train one decision tree and write it as DOT");
  tree->add_option("--width", cfg.width, "Sensor width")->capture_default_str();
  tree->add_option("--seed", cfg.seed, "Split seed")->capture_default_str();
  tree->add_option("--out", cfg.out, "DOT output path (default: tree_<width>.dot)");
  tree->add_option("--restrict", cfg.restrict_to, "Only split on these features (names or indices)")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*fetch) return cmd_fetch(cfg);
    if (*verify) return cmd_verify(cfg);
    if (*derive) return cmd_derive(cfg);
    if (*bench) return cmd_bench(cfg);
    if (*tree) return cmd_export_tree(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const wfr::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExecution;
  }
  return kUsage;
}
