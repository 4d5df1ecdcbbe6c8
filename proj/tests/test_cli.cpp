#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "umtr/umtr.hpp"

namespace umtr {
namespace {

using testing::read_file;
using testing::TempDir;
using testing::write_file;

struct RunResult {
  int code = -1;
  std::string err;
};

RunResult run_cli(const TempDir& dir, const std::string& args) {
  const std::string err_path = dir.file("stderr.txt");
  const std::string cmd = std::string(UMTR_CLI_PATH) + " " + args + " > " + dir.file("stdout.txt") +
                          " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_file(err_path);
  return r;
}

std::string iris_path() { return std::string(UMTR_DATA_DIR) + "/iris.csv"; }

const char* kQuick = " --kdup 5 --rounds 10 --threads 1";

TEST(Cli, FitIrisWithDefaults) {
  const TempDir dir;
  const auto r = run_cli(dir, "fit --data " + iris_path() + " --out " + dir.file("model.umtr"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = load_model(dir.file("model.umtr"));
  EXPECT_EQ(model.classifiers.size(), 5u);
  EXPECT_EQ(model.config.n_bins, 20u);
  EXPECT_EQ(model.config.k_dup, 50u);
  EXPECT_DOUBLE_EQ(model.config.top_p, 0.9);
  const auto manifest = read_file(dir.file("model.umtr.manifest.txt"));
  EXPECT_NE(manifest.find("command=fit"), std::string::npos);
  EXPECT_NE(manifest.find("argv="), std::string::npos);
  EXPECT_NE(manifest.find("checksum.crc32.model.umtr="), std::string::npos);
  EXPECT_NE(manifest.find("wall_clock_seconds="), std::string::npos);
}

TEST(Cli, KdupOneOnToyEmitsKndRows) {
  const TempDir dir;
  std::string csv = "a,b\n";
  for (int i = 0; i < 10; ++i) csv += std::to_string(i * 0.5) + "," + std::to_string(i * i * 0.1) + "\n";
  write_file(dir.file("toy.csv"), csv);
  const auto r = run_cli(dir, "fit --data " + dir.file("toy.csv") + " --kdup 1 --rounds 3 --out " +
                                  dir.file("toy.umtr"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = load_model(dir.file("toy.umtr"));
  const auto sets = build_training_sets(load_csv(dir.file("toy.csv")), model.coders,
                                        model.config.k_dup, model.config.seed);
  std::size_t rows = 0;
  for (const auto& s : sets) rows += s.y.size();
  EXPECT_EQ(rows, 20u);
}

TEST(Cli, SingleBinGeneratesUniformOverRange) {
  const TempDir dir;
  save_csv(two_moons(200, 0.1, 0), dir.file("moons.csv"));
  ASSERT_EQ(run_cli(dir, "fit --data " + dir.file("moons.csv") + " --bins 1 --kdup 2 --rounds 2 --out " +
                             dir.file("m.umtr")).code,
            0);
  ASSERT_EQ(run_cli(dir, "generate --model " + dir.file("m.umtr") + " --n 4000 --out " +
                             dir.file("gen.csv")).code,
            0);
  const auto model = load_model(dir.file("m.umtr"));
  const auto gen = load_csv(dir.file("gen.csv"));
  for (std::size_t j = 0; j < 2; ++j) {
    const auto [lo, hi] = model.train_ranges[j];
    std::vector<double> u;
    for (std::size_t i = 0; i < gen.n_rows(); ++i) {
      const double v = gen.value(i, j);
      ASSERT_GE(v, lo);
      ASSERT_LE(v, hi);
      u.push_back((v - lo) / (hi - lo));
    }
    std::sort(u.begin(), u.end());
    double ks = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      ks = std::max({ks, std::abs(u[i] - static_cast<double>(i) / u.size()),
                     std::abs(static_cast<double>(i + 1) / u.size() - u[i])});
    }
    EXPECT_LT(ks, 1.63 / std::sqrt(static_cast<double>(u.size())));  // 1% critical value
  }
}

TEST(Cli, GenerateZeroRowsAndDeterminism) {
  const TempDir dir;
  save_csv(two_moons(100, 0.1, 1), dir.file("moons.csv"));
  ASSERT_EQ(run_cli(dir, "fit --data " + dir.file("moons.csv") + kQuick + " --out " + dir.file("m.umtr")).code, 0);
  ASSERT_EQ(run_cli(dir, "generate --model " + dir.file("m.umtr") + " --n 0 --out " + dir.file("empty.csv")).code, 0);
  EXPECT_EQ(read_file(dir.file("empty.csv")), "x,y\n");
  for (const char* name : {"a.csv", "b.csv"}) {
    ASSERT_EQ(run_cli(dir, "generate --model " + dir.file("m.umtr") + " --n 200 --seed 5 --out " +
                               dir.file(name)).code,
              0);
  }
  EXPECT_EQ(read_file(dir.file("a.csv")), read_file(dir.file("b.csv")));
  EXPECT_EQ(load_csv(dir.file("a.csv")).n_rows(), 200u);
  EXPECT_NE(read_file(dir.file("a.csv.manifest.txt")).find("checksum.crc32.a.csv="), std::string::npos);
}

TEST(Cli, ThreadCountDoesNotChangeOutputs) {
  const TempDir dir;
  save_csv(apply_mcar(two_moons(100, 0.1, 2), 0.5, 0.5, {}, 3), dir.file("in.csv"));
  for (const char* t : {"1", "4"}) {
    const std::string tag = t;
    ASSERT_EQ(run_cli(dir, "fit --data " + dir.file("in.csv") + " --kdup 5 --rounds 10 --threads " + tag +
                               " --out " + dir.file("m" + tag + ".umtr")).code,
              0);
    ASSERT_EQ(run_cli(dir, "impute --model " + dir.file("m" + tag + ".umtr") + " --data " +
                               dir.file("in.csv") + " --m 2 --threads " + tag + " --out-dir " +
                               dir.file("imp" + tag)).code,
              0);
  }
  EXPECT_EQ(read_file(dir.file("m1.umtr")), read_file(dir.file("m4.umtr")));
  EXPECT_EQ(read_file(dir.file("imp1/imputed_001.csv")), read_file(dir.file("imp4/imputed_001.csv")));
}

TEST(Cli, ImputeWritesNumberedFilesAndManifest) {
  const TempDir dir;
  const auto truth = two_moons(100, 0.1, 4);
  save_csv(apply_mcar(truth, 0.3, 0.5, {}, 5), dir.file("in.csv"));
  ASSERT_EQ(run_cli(dir, "fit --data " + dir.file("in.csv") + kQuick + " --out " + dir.file("m.umtr")).code, 0);
  const auto r = run_cli(dir, "impute --model " + dir.file("m.umtr") + " --data " + dir.file("in.csv") +
                                  " --m 3 --out-dir " + dir.file("out"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"imputed_000.csv", "imputed_001.csv", "imputed_002.csv"}) {
    EXPECT_TRUE(load_csv(dir.file(std::string("out/") + name)).fully_observed());
  }
  const auto manifest = read_file(dir.file("out/manifest.txt"));
  EXPECT_NE(manifest.find("checksum.crc32.imputed_002.csv="), std::string::npos);
  EXPECT_NE(manifest.find("m=3"), std::string::npos);
}

TEST(Cli, ImputeFullyObservedAndSingleImputation) {
  const TempDir dir;
  save_csv(two_moons(60, 0.1, 6), dir.file("full.csv"));
  ASSERT_EQ(run_cli(dir, "fit --data " + dir.file("full.csv") + kQuick + " --out " + dir.file("m.umtr")).code, 0);
  ASSERT_EQ(run_cli(dir, "impute --model " + dir.file("m.umtr") + " --data " + dir.file("full.csv") +
                             " --m 2 --out-dir " + dir.file("o")).code,
            0);
  EXPECT_EQ(read_file(dir.file("o/imputed_000.csv")), read_file(dir.file("full.csv")));
  EXPECT_EQ(read_file(dir.file("o/imputed_001.csv")), read_file(dir.file("full.csv")));
  ASSERT_EQ(run_cli(dir, "impute --model " + dir.file("m.umtr") + " --data " + dir.file("full.csv") +
                             " --m 1 --out-dir " + dir.file("one")).code,
            0);
  EXPECT_TRUE(std::filesystem::exists(dir.file("one/imputed_000.csv")));
  EXPECT_FALSE(std::filesystem::exists(dir.file("one/imputed_001.csv")));
}

TEST(Cli, ImputeKeepsCategoryCodesOfTheModel) {
  const TempDir dir;
  ASSERT_EQ(run_cli(dir, "fit --data " + iris_path() + kQuick + " --out " + dir.file("iris.umtr")).code, 0);
  // only virginica rows: codes must still follow the model's label order
  write_file(dir.file("v.csv"),
             "sepal_length,sepal_width,petal_length,petal_width,species\n"
             "6.3,3.3,,2.5,virginica\n5.8,2.7,5.1,,virginica\n");
  ASSERT_EQ(run_cli(dir, "impute --model " + dir.file("iris.umtr") + " --data " + dir.file("v.csv") +
                             " --m 1 --out-dir " + dir.file("o")).code,
            0);
  const auto text = read_file(dir.file("o/imputed_000.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.find("setosa"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const TempDir dir;
  write_file(dir.file("bad.csv"), "a,b\n1,2\n3\n");
  EXPECT_EQ(run_cli(dir, "fit --data " + dir.file("bad.csv") + " --out " + dir.file("x.umtr")).code, 2);

  write_file(dir.file("empty_col.csv"), "a,b\n1,\n2,\n3,\n");
  EXPECT_EQ(run_cli(dir, "fit --data " + dir.file("empty_col.csv") + " --out " + dir.file("x.umtr")).code, 3);

  write_file(dir.file("junk.umtr"), "not a model");
  EXPECT_EQ(run_cli(dir, "generate --model " + dir.file("junk.umtr") + " --out " + dir.file("g.csv")).code, 4);
  EXPECT_EQ(run_cli(dir, "generate --model " + dir.file("missing.umtr") + " --out " + dir.file("g.csv")).code, 4);

  save_csv(two_moons(40, 0.1, 7), dir.file("moons.csv"));
  ASSERT_EQ(run_cli(dir, "fit --data " + dir.file("moons.csv") + kQuick + " --out " + dir.file("m.umtr")).code, 0);
  write_file(dir.file("other.csv"), "p,q,r\n1,2,3\n4,5,6\n");
  const auto mismatch = run_cli(dir, "impute --model " + dir.file("m.umtr") + " --data " +
                                         dir.file("other.csv") + " --out-dir " + dir.file("o"));
  EXPECT_EQ(mismatch.code, 5);
  EXPECT_NE(mismatch.err.find("schema"), std::string::npos);

  write_file(dir.file("no_species.csv"), "a,b\n1,2\n3,4\n");
  const auto bench = run_cli(dir, "bench --suite iris --data " + dir.file("no_species.csv") +
                                      " --out " + dir.file("b"));
  EXPECT_EQ(bench.code, 6);
  EXPECT_NE(bench.err.find("stage 'data'"), std::string::npos) << bench.err;

  EXPECT_NE(run_cli(dir, "bench --suite nope --out " + dir.file("b")).code, 0);
  EXPECT_NE(run_cli(dir, "").code, 0);
}

TEST(Cli, BenchMoonsIsReproducible) {
  const TempDir dir;
  for (const char* out : {"r1", "r2"}) {
    const auto r = run_cli(dir, std::string("bench --suite moons --kdup 10 --rounds 20 --seed 3 --m 3 --out ") +
                                    dir.file(out));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* name : {"report.csv", "report.txt", "points.csv", "generated.csv", "imputed_002.csv",
                           "model.umtr"}) {
    EXPECT_EQ(read_file(dir.file(std::string("r1/") + name)), read_file(dir.file(std::string("r2/") + name)))
        << name;
  }
  const auto report = read_file(dir.file("r1/report.txt"));
  EXPECT_NE(report.find("moons.imputed_near_fraction="), std::string::npos);
  EXPECT_NE(report.find("suite=moons"), std::string::npos);
  EXPECT_NE(read_file(dir.file("r1/manifest.txt")).find("checksum.crc32.points.csv="), std::string::npos);
}

TEST(Cli, BenchIrisWritesSpeciesDistances) {
  const TempDir dir;
  const auto r = run_cli(dir, std::string("bench --suite iris --kdup 5 --rounds 20 --m 2 --out ") + dir.file("iris"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_file(dir.file("iris/report.txt"));
  for (const char* key : {"iris.petal_length_avg_mae=", "iris.petal_length_w1.setosa=",
                          "iris.petal_length_w1.virginica=", "feature.species.avg_mae="}) {
    EXPECT_NE(report.find(key), std::string::npos) << key;
  }
  EXPECT_NE(read_file(dir.file("iris/manifest.txt")).find("checksum.input.iris.csv="), std::string::npos);
}

}  // namespace
}  // namespace umtr
