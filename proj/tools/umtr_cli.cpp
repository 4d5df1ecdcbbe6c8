// umtr: fit, generate, impute and case-study benchmarks from the command line.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "umtr/umtr.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kParseFailure = 2,
  kFitFailure = 3,
  kModelLoadFailure = 4,
  kSchemaMismatch = 5,
  kBenchStageFailure = 6,
};

/// A failure that maps to a specific process exit code.
struct CliFailure {
  int code;
  std::string message;
};

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string file_crc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return hex32(umtr::crc32_of(bytes));
}

std::string shell_quote(const std::string& s) {
  if (!s.empty() && s.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
                                        "0123456789-_./=:,+") == std::string::npos) {
    return s;
  }
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// Everything needed to re-run a command: argv, resolved settings, inputs,
/// outputs and their checksums.
class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv)
      : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
    for (int i = 0; i < argc; ++i) argv_ += (i ? " " : "") + shell_quote(argv[i]);
    started_at_ = utc_now();
  }

  void set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void set(const std::string& key, double value) { set(key, umtr::csv_detail::format_number(value)); }
  void set_config(const umtr::EngineConfig& c) {
    set("config.bins", std::to_string(c.n_bins));
    set("config.top_p", c.top_p);
    set("config.kdup", std::to_string(c.k_dup));
    set("config.alpha", c.alpha);
    set("config.rounds", std::to_string(c.tree.rounds));
    set("config.learning_rate", c.tree.learning_rate);
    set("config.max_depth", std::to_string(c.tree.max_depth));
    set("config.min_child_weight", c.tree.min_child_weight);
    set("config.lambda", c.tree.lambda);
    set("config.hist_bins", std::to_string(c.tree.n_hist_bins));
    set("config.exact_splits", c.tree.exact_splits ? "true" : "false");
  }
  void input(const std::string& path) {
    set("input", path);
    set("checksum.input." + fs::path(path).filename().string(), file_crc(path));
  }
  void output(const std::string& path) {
    outputs_.push_back(path);
  }

  void write(const std::string& path) const {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(path);
    out << "command=" << command_ << "\n"
        << "argv=" << argv_ << "\n"
        << "started_at=" << started_at_ << "\n";
    for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
    for (const auto& p : outputs_) {
      out << "output=" << p << "\n"
          << "checksum.crc32." << fs::path(p).filename().string() << "=" << file_crc(p) << "\n";
    }
    out << "wall_clock_seconds=" << umtr::csv_detail::format_number(seconds) << "\n";
    if (!out) throw CliFailure{kFailure, "cannot write manifest '" + path + "'"};
  }

 private:
  std::string command_;
  std::string argv_;
  std::string started_at_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::string> outputs_;
};

std::string sibling_manifest(const std::string& output) { return output + ".manifest.txt"; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliFailure{kFailure, "cannot create directory '" + dir + "': " + ec.message()};
}

umtr::UnmaskingModel load_model_or_fail(const std::string& path) {
  try {
    return umtr::load_model(path);
  } catch (const std::exception& e) {
    throw CliFailure{kModelLoadFailure, "cannot load model '" + path + "': " + e.what()};
  }
}

umtr::TabularDataset load_data_or_fail(const std::string& path,
                                       const std::optional<umtr::Schema>& hint) {
  try {
    return umtr::load_csv(path, hint);
  } catch (const umtr::ParseError& e) {
    throw CliFailure{kParseFailure, "cannot parse '" + path + "': " + e.what()};
  } catch (const umtr::Error& e) {
    throw CliFailure{kParseFailure, "cannot read '" + path + "': " + e.what()};
  }
}

std::string imputed_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "imputed_%03zu.csv", k);
  return buf;
}

struct CommonOptions {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  unsigned resolved_threads() const { return threads ? threads : umtr::default_thread_count(); }
};

void add_engine_options(CLI::App* cmd, umtr::EngineConfig& c) {
  cmd->add_option("--bins", c.n_bins, "Bins per continuous feature")->capture_default_str();
  cmd->add_option("--top-p", c.top_p, "Nucleus sampling mass")->capture_default_str();
  cmd->add_option("--kdup", c.k_dup, "Random orders per training row")->capture_default_str();
  cmd->add_option("--alpha", c.alpha, "Binning bandwidth multiplier")->capture_default_str();
  cmd->add_option("--rounds", c.tree.rounds, "Boosting rounds")->capture_default_str();
  cmd->add_option("--learning-rate", c.tree.learning_rate, "Boosting step size")
      ->capture_default_str();
  cmd->add_option("--max-depth", c.tree.max_depth, "Maximum tree depth")->capture_default_str();
  cmd->add_option("--min-child-weight", c.tree.min_child_weight, "Minimum hessian per child")
      ->capture_default_str();
  cmd->add_option("--lambda", c.tree.lambda, "L2 leaf regularisation")->capture_default_str();
  cmd->add_option("--hist-bins", c.tree.n_hist_bins, "Histogram split candidates per feature")
      ->capture_default_str();
  cmd->add_flag("--exact-splits", c.tree.exact_splits, "Try every distinct value as a split");
}

void add_common_options(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", o.threads, "Worker threads (0: $UMTR_THREADS or all cores)")
      ->capture_default_str();
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data, schema, out;
  umtr::EngineConfig config;
  CommonOptions common;
};

void run_fit(const FitArgs& a, Manifest& manifest) {
  std::optional<umtr::Schema> hint;
  if (!a.schema.empty()) {
    try {
      hint = umtr::load_schema(a.schema);
    } catch (const umtr::Error& e) {
      throw CliFailure{kParseFailure, "cannot parse schema '" + a.schema + "': " + e.what()};
    }
  }
  const auto data = load_data_or_fail(a.data, hint);
  umtr::EngineConfig cfg = a.config;
  cfg.seed = a.common.seed;
  umtr::UnmaskingModel model;
  try {
    model = umtr::fit(data, cfg, a.common.threads);
  } catch (const std::exception& e) {
    throw CliFailure{kFitFailure, std::string("fit failed: ") + e.what()};
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path().string());
  umtr::save_model(model, a.out);

  manifest.input(a.data);
  if (!a.schema.empty()) manifest.set("schema", a.schema);
  manifest.set_config(cfg);
  manifest.set("seed", std::to_string(cfg.seed));
  manifest.set("threads", std::to_string(a.common.resolved_threads()));
  manifest.set("rows", std::to_string(data.n_rows()));
  manifest.set("features", std::to_string(data.n_features()));
  manifest.output(a.out);
  manifest.write(sibling_manifest(a.out));
  std::cout << "fitted " << model.n_features() << " classifiers on " << data.n_rows()
            << " rows -> " << a.out << "\n";
}

struct GenerateArgs {
  std::string model, out;
  std::size_t n = 200;
  CommonOptions common;
};

void run_generate(const GenerateArgs& a, Manifest& manifest) {
  const auto model = load_model_or_fail(a.model);
  const auto data = a.n == 0 ? umtr::TabularDataset(model.schema, 0, {}, {})
                             : umtr::generate(model, a.n, a.common.seed, a.common.threads);
  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path().string());
  umtr::save_csv(data, a.out);
  manifest.set("model", a.model);
  manifest.set("checksum.model", file_crc(a.model));
  manifest.set("n", std::to_string(a.n));
  manifest.set("seed", std::to_string(a.common.seed));
  manifest.set("threads", std::to_string(a.common.resolved_threads()));
  manifest.output(a.out);
  manifest.write(sibling_manifest(a.out));
  std::cout << "generated " << a.n << " rows -> " << a.out << "\n";
}

struct ImputeArgs {
  std::string model, data, out_dir;
  std::size_t m = 10;
  CommonOptions common;
};

void run_impute(const ImputeArgs& a, Manifest& manifest) {
  const auto model = load_model_or_fail(a.model);
  // structure is checked before the schema so malformed files and mismatched schemas stay distinct failures
  std::vector<umtr::csv_detail::Record> records;
  try {
    records = umtr::csv_detail::parse_records(umtr::csv_detail::read_file(a.data));
  } catch (const umtr::ParseError& e) {
    throw CliFailure{kParseFailure, "cannot parse '" + a.data + "': " + e.what()};
  } catch (const umtr::Error& e) {
    throw CliFailure{kParseFailure, "cannot read '" + a.data + "': " + e.what()};
  }
  if (records.empty()) throw CliFailure{kParseFailure, "cannot parse '" + a.data + "': no header"};
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != records[0].size()) {
      throw CliFailure{kParseFailure, "cannot parse '" + a.data + "': line " + std::to_string(i + 1) +
                                          " has " + std::to_string(records[i].size()) + " fields, expected " +
                                          std::to_string(records[0].size())};
    }
  }
  bool same_columns = records[0].size() == model.n_features();
  for (std::size_t j = 0; same_columns && j < records[0].size(); ++j) {
    same_columns = umtr::csv_detail::trim(records[0][j]) == model.schema[j].name;
  }
  if (!same_columns) {
    throw CliFailure{kSchemaMismatch, "columns of '" + a.data + "' do not match the model schema"};
  }
  umtr::TabularDataset data;
  try {
    data = umtr::load_csv(a.data, model.schema);
  } catch (const std::exception& e) {
    throw CliFailure{kSchemaMismatch, "'" + a.data + "' does not fit the model schema: " + e.what()};
  }
  std::vector<umtr::TabularDataset> outputs;
  try {
    outputs = umtr::impute(model, data, a.m, a.common.seed, a.common.threads);
  } catch (const umtr::SchemaMismatchError& e) {
    throw CliFailure{kSchemaMismatch, e.what()};
  }
  ensure_dir(a.out_dir);
  manifest.set("model", a.model);
  manifest.set("checksum.model", file_crc(a.model));
  manifest.input(a.data);
  manifest.set("m", std::to_string(a.m));
  manifest.set("seed", std::to_string(a.common.seed));
  manifest.set("threads", std::to_string(a.common.resolved_threads()));
  manifest.set("missing_cells", std::to_string(data.n_rows() * data.n_features() -
                                               data.count_observed()));
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const std::string path = (fs::path(a.out_dir) / imputed_name(k)).string();
    umtr::save_csv(outputs[k], path);
    manifest.output(path);
  }
  manifest.write((fs::path(a.out_dir) / "manifest.txt").string());
  std::cout << "wrote " << outputs.size() << " imputations -> " << a.out_dir << "\n";
}

struct BenchArgs {
  std::string suite, out, data;
  std::size_t m = 10;
  umtr::EngineConfig config;
  CommonOptions common;
};

/// Plot-ready long-format points: source,imputation,row,<features>.
void write_points(const std::string& path, const umtr::TabularDataset& truth,
                  const std::vector<umtr::TabularDataset>& imputations,
                  const umtr::TabularDataset& incomplete, const umtr::TabularDataset& generated) {
  std::ofstream out(path);
  out << "source,imputation,row";
  for (const auto& f : truth.schema()) out << "," << umtr::csv_detail::quote_if_needed(f.name);
  out << "\n";
  auto emit = [&](const char* source, long k, std::size_t i, const umtr::TabularDataset& d) {
    out << source << "," << (k < 0 ? std::string() : std::to_string(k)) << "," << i;
    for (std::size_t j = 0; j < d.n_features(); ++j) {
      out << ",";
      const auto& f = d.feature(j);
      if (f.kind.is_categorical() && !f.labels.empty()) {
        out << umtr::csv_detail::quote_if_needed(f.labels.at(static_cast<std::size_t>(d.value(i, j))));
      } else {
        out << umtr::csv_detail::format_number(d.value(i, j));
      }
    }
    out << "\n";
  };
  for (std::size_t i = 0; i < truth.n_rows(); ++i) emit("truth", -1, i, truth);
  for (std::size_t k = 0; k < imputations.size(); ++k) {
    for (std::size_t i = 0; i < incomplete.n_rows(); ++i) {
      bool touched = false;
      for (std::size_t j = 0; j < incomplete.n_features(); ++j) touched |= !incomplete.observed(i, j);
      if (touched) emit("imputed", static_cast<long>(k), i, imputations[k]);
    }
  }
  for (std::size_t i = 0; i < generated.n_rows(); ++i) emit("generated", -1, i, generated);
  if (!out) throw umtr::Error("cannot write '" + path + "'");
}

void run_bench(const BenchArgs& a, Manifest& manifest) {
  umtr::CaseStudyOptions opt;
  opt.seed = a.common.seed;
  opt.threads = a.common.threads;
  opt.config = a.config;
  opt.imputations = a.m;

  const fs::path dir(a.out);
  std::map<std::string, std::string> extra;
  const umtr::TabularDataset* truth = nullptr;
  const umtr::TabularDataset* incomplete = nullptr;
  const std::vector<umtr::TabularDataset>* imputations = nullptr;
  const umtr::TabularDataset* generated = nullptr;
  const umtr::UnmaskingModel* model = nullptr;
  const umtr::ImputationReport* report = nullptr;

  std::optional<umtr::MoonsCaseStudy> moons;
  std::optional<umtr::IrisCaseStudy> iris;
  try {
    if (a.suite == "moons") {
      moons = umtr::run_moons_case_study(opt);
      auto fmt = umtr::csv_detail::format_number;
      extra["moons.imputed_near_fraction"] = fmt(moons->imputed_near_fraction);
      extra["moons.near_threshold"] = fmt(umtr::kMoonsNearThreshold);
      extra["moons.overlap_count"] = std::to_string(moons->overlap_count);
      extra["moons.overlap_upper_fraction"] = fmt(moons->overlap_upper_fraction);
      extra["moons.overlap_lower_fraction"] = fmt(moons->overlap_lower_fraction);
      extra["moons.generated_near_fraction"] = fmt(moons->generated_near_fraction);
      extra["moons.generated_w_train"] = fmt(moons->generated_w_train);
      truth = &moons->truth;
      incomplete = &moons->incomplete;
      imputations = &moons->imputations;
      generated = &moons->generated;
      model = &moons->model;
      report = &moons->report;
    } else {
      const std::string path = a.data.empty() ? std::string(UMTR_DATA_DIR) + "/iris.csv" : a.data;
      const auto data = umtr::case_detail::stage("load", [&] { return umtr::load_csv(path); });
      manifest.input(path);
      iris = umtr::run_iris_case_study(data, opt);
      auto fmt = umtr::csv_detail::format_number;
      extra["iris.petal_length_avg_mae"] = fmt(iris->petal_length_avg_mae);
      extra["iris.generated_w_train"] = fmt(iris->generated_w_train);
      for (const auto& s : iris->petal_length_by_species) {
        extra["iris.petal_length_w1." + s.species] = fmt(s.w1);
        extra["iris.petal_length_imputed_cells." + s.species] = std::to_string(s.imputed_cells);
      }
      truth = &iris->truth;
      incomplete = &iris->incomplete;
      imputations = &iris->imputations;
      generated = &iris->generated;
      model = &iris->model;
      report = &iris->report;
    }
  } catch (const umtr::CaseStudyError& e) {
    throw CliFailure{kBenchStageFailure, "bench " + a.suite + ": " + e.what()};
  }

  try {
    ensure_dir(a.out);
    std::vector<std::string> files;
    auto path = [&](const std::string& name) {
      files.push_back((dir / name).string());
      return files.back();
    };
    umtr::save_csv(*truth, path("truth.csv"));
    umtr::save_csv(*incomplete, path("incomplete.csv"));
    for (std::size_t k = 0; k < imputations->size(); ++k) {
      umtr::save_csv((*imputations)[k], path(imputed_name(k)));
    }
    umtr::save_csv(*generated, path("generated.csv"));
    write_points(path("points.csv"), *truth, *imputations, *incomplete, *generated);
    umtr::save_model(*model, path("model.umtr"));
    {
      std::ofstream out(path("report.txt"));
      extra["suite"] = a.suite;
      out << umtr::format_report(*report, extra);
    }
    {
      std::ofstream out(path("report.csv"));
      out << umtr::report_csv_header() << umtr::format_report_csv_rows(a.suite, *report);
    }
    umtr::EngineConfig cfg = a.config;
    cfg.seed = a.common.seed;
    manifest.set("suite", a.suite);
    manifest.set_config(cfg);
    manifest.set("seed", std::to_string(a.common.seed));
    manifest.set("threads", std::to_string(a.common.resolved_threads()));
    manifest.set("m", std::to_string(a.m));
    for (const auto& f : files) manifest.output(f);
    manifest.write((dir / "manifest.txt").string());
  } catch (const CliFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw CliFailure{kBenchStageFailure, "bench " + a.suite + ": stage 'write' failed: " + e.what()};
  }
  std::cout << umtr::format_report(*report, extra);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unmasking-tree tabular generation and imputation"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV file");
  fit_cmd->add_option("--data", fit_args.data, "Training CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--schema", fit_args.schema, "Schema sidecar (name,kind[,cardinality])")
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit_args.out, "Model file to write")->required();
  add_engine_options(fit_cmd, fit_args.config);
  add_common_options(fit_cmd, fit_args.common);

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "Sample synthetic rows from a model");
  gen_cmd->add_option("--model", gen_args.model, "Model file")->required();
  gen_cmd->add_option("--n", gen_args.n, "Rows to generate")->capture_default_str();
  gen_cmd->add_option("--out", gen_args.out, "CSV to write")->required();
  add_common_options(gen_cmd, gen_args.common);

  ImputeArgs imp_args;
  auto* imp_cmd = app.add_subcommand("impute", "Fill the missing cells of a CSV file");
  imp_cmd->add_option("--model", imp_args.model, "Model file")->required();
  imp_cmd->add_option("--data", imp_args.data, "CSV with missing cells")->required()
      ->check(CLI::ExistingFile);
  imp_cmd->add_option("--m", imp_args.m, "Number of imputations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  imp_cmd->add_option("--out-dir", imp_args.out_dir, "Directory for imputed_NNN.csv")->required();
  add_common_options(imp_cmd, imp_args.common);

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Run a bundled case study end to end");
  bench_cmd->add_option("--suite", bench_args.suite, "moons or iris")
      ->required()
      ->check(CLI::IsMember({"moons", "iris"}));
  bench_cmd->add_option("--out", bench_args.out, "Output directory")->required();
  bench_cmd->add_option("--data", bench_args.data, "Iris CSV (defaults to the bundled copy)");
  bench_cmd->add_option("--m", bench_args.m, "Number of imputations")
      ->capture_default_str()
      ->check(CLI::Range(2, 1000));
  add_engine_options(bench_cmd, bench_args.config);
  add_common_options(bench_cmd, bench_args.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFailure;
  }

  try {
    if (*fit_cmd) {
      Manifest manifest("fit", argc, argv);
      run_fit(fit_args, manifest);
    } else if (*gen_cmd) {
      Manifest manifest("generate", argc, argv);
      run_generate(gen_args, manifest);
    } else if (*imp_cmd) {
      Manifest manifest("impute", argc, argv);
      run_impute(imp_args, manifest);
    } else if (*bench_cmd) {
      Manifest manifest("bench", argc, argv);
      run_bench(bench_args, manifest);
    }
  } catch (const CliFailure& f) {
    std::cerr << "umtr: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "umtr: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
