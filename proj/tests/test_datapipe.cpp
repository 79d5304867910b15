#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gfcnn/datapipe.hpp"
#include "gfcnn/eval.hpp"
#include "gfcnn/rng.hpp"
#include "testutil.hpp"

using namespace gfcnn;
using testutil::message_contains;

namespace {

SeriesSet make_set(std::size_t n_vars,
                   std::vector<std::tuple<int, std::string, std::vector<double>>> runs) {
  SeriesSet s;
  s.n_vars = n_vars;
  for (std::size_t i = 0; i < n_vars; ++i) s.var_names.push_back(cat("v", i + 1));
  for (auto& [label, id, values] : runs) {
    Run r;
    r.label = label;
    r.run_id = id;
    r.n_samples = values.size() / n_vars;
    r.values = values;
    s.runs.push_back(std::move(r));
  }
  return s;
}

}  // namespace

TEST_CASE("norm stats examples") {
  auto s = make_set(1, {{1, "a", {1.0, 3.0}}});
  auto st = compute_norm_stats(s);
  CHECK(st.mean[0] == doctest::Approx(2.0));
  CHECK(st.stddev[0] == doctest::Approx(1.0));  // population standard deviation
  CHECK(st.degenerate.empty());

  auto flat = make_set(2, {{1, "a", {5.0, 1.0, 5.0, 2.0, 5.0, 3.0}}});
  auto st2 = compute_norm_stats(flat);
  CHECK(st2.stddev[0] == 1.0);  // constant column forced to 1
  REQUIRE(st2.degenerate.size() == 1);
  CHECK(st2.degenerate[0] == 0);

  CHECK_THROWS_AS(compute_norm_stats(SeriesSet{}), std::invalid_argument);
  CHECK_THROWS_AS(compute_norm_stats(make_set(1, {{1, "a", {1.0}}})),
                  std::invalid_argument);
}

TEST_CASE("norm stats match a long-double two-pass oracle") {
  Rng rng(55);
  SeriesSet s;
  s.n_vars = 7;
  for (int r = 0; r < 3; ++r) {
    Run run;
    run.label = 1 + r;
    run.run_id = cat("r", r);
    run.n_samples = 40 + r * 13;
    run.values.resize(run.n_samples * s.n_vars);
    for (auto& v : run.values) v = rng.uniform(-100, 100);
    s.runs.push_back(std::move(run));
  }
  auto st = compute_norm_stats(s);

  const std::size_t m = s.total_samples();
  for (std::size_t i = 0; i < s.n_vars; ++i) {
    long double mean = 0.0L;
    for (const auto& r : s.runs)
      for (std::size_t k = 0; k < r.n_samples; ++k)
        mean += r.values[k * s.n_vars + i];
    mean /= m;
    long double var = 0.0L;
    for (const auto& r : s.runs)
      for (std::size_t k = 0; k < r.n_samples; ++k) {
        const long double d = r.values[k * s.n_vars + i] - mean;
        var += d * d;
      }
    var /= m;
    CHECK(std::abs(st.mean[i] - static_cast<double>(mean)) < 1e-10);
    CHECK(std::abs(st.stddev[i] - static_cast<double>(std::sqrt(var))) < 1e-10);
  }
}

TEST_CASE("normalization semantics") {
  NormStats st;
  st.mean = {5.0};
  st.stddev = {2.0};
  auto s = make_set(1, {{1, "a", {7.0, 3.0}}});
  auto out = normalize(s, st);
  CHECK(out.runs[0].values[0] == doctest::Approx(1.0));
  CHECK(out.runs[0].values[1] == doctest::Approx(-1.0));

  SUBCASE("re-computed stats of normalized training data are (0,1)") {
    Rng rng(56);
    SeriesSet train;
    train.n_vars = 4;
    Run r;
    r.label = 1;
    r.run_id = "a";
    r.n_samples = 500;
    r.values.resize(500 * 4);
    for (auto& v : r.values) v = rng.uniform(-3, 9);
    train.runs.push_back(std::move(r));
    auto stats = compute_norm_stats(train);
    auto renorm = compute_norm_stats(normalize(train, stats));
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(renorm.mean[i]) < 1e-9);
      CHECK(std::abs(renorm.stddev[i] - 1.0) < 1e-9);
    }
  }
  SUBCASE("test data must use training stats, not its own") {
    // test run shifted by +3: normalizing with train stats leaves the shift
    auto train = make_set(1, {{1, "a", {0.0, 2.0, 4.0}}});
    auto test = make_set(1, {{1, "b", {3.0, 5.0, 7.0}}});
    auto train_stats = compute_norm_stats(train);
    auto with_train = normalize(test, train_stats);
    auto with_self = normalize(test, compute_norm_stats(test));
    const double expected_gap = 3.0 / train_stats.stddev[0];
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(with_train.runs[0].values[i] - with_self.runs[0].values[i] ==
            doctest::Approx(expected_gap));
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(normalize(make_set(2, {{1, "a", {1.0, 2.0}}}), st),
                    std::invalid_argument);
  }
}

TEST_CASE("windowing counts") {
  SUBCASE("480-sample runs yield 24 windows of width 20") {
    SeriesSet s;
    s.n_vars = 3;
    Run r;
    r.label = 1;
    r.run_id = "a";
    r.n_samples = 480;
    r.values.assign(480 * 3, 0.5);
    s.runs.push_back(r);
    CHECK(window_series(s, 20).size() == 24);
  }
  SUBCASE("19 samples yield no window of width 20") {
    SeriesSet s;
    s.n_vars = 1;
    Run r;
    r.label = 1;
    r.run_id = "a";
    r.n_samples = 19;
    r.values.assign(19, 0.0);
    s.runs.push_back(r);
    CHECK(window_series(s, 20).empty());
  }
  SUBCASE("windows never span runs and counts are conserved") {
    Rng rng(57);
    SeriesSet s;
    s.n_vars = 2;
    std::size_t expected = 0;
    for (int i = 0; i < 5; ++i) {
      Run r;
      r.label = 1 + i % 2;
      r.run_id = cat("r", i);
      r.n_samples = 5 + rng.below(40);
      r.values.resize(r.n_samples * 2);
      for (auto& v : r.values) v = rng.uniform();
      expected += r.n_samples / 7;
      s.runs.push_back(std::move(r));
    }
    auto wins = window_series(s, 7);
    CHECK(wins.size() == expected);
    for (const auto& w : wins) CHECK(w.values.size() == 2 * 7);
  }
  SUBCASE("window content is the transposed slice") {
    SeriesSet s;
    s.n_vars = 2;
    Run r;
    r.label = 1;
    r.run_id = "a";
    r.n_samples = 4;
    r.values = {1, 10, 2, 20, 3, 30, 4, 40};
    s.runs.push_back(r);
    auto wins = window_series(s, 2);
    REQUIRE(wins.size() == 2);
    // first window: var0 = [1,2], var1 = [10,20]
    CHECK(wins[0].values == std::vector<double>{1, 2, 10, 20});
    CHECK(wins[1].values == std::vector<double>{3, 4, 30, 40});
  }
}

TEST_CASE("signal-to-image conversion") {
  SUBCASE("row [1,2,3] maps to [0,128,255]") {
    Window w{1, "a", 0, 1, 3, {1.0, 2.0, 3.0}};
    auto img = window_to_image(w);
    CHECK(img.pixels == std::vector<std::uint8_t>{0, 128, 255});
  }
  SUBCASE("constant window is all zeros") {
    Window w{2, "a", 0, 2, 2, {4.2, 4.2, 4.2, 4.2}};
    auto img = window_to_image(w);
    CHECK(img.pixels == std::vector<std::uint8_t>{0, 0, 0, 0});
    CHECK(img.label == 1);  // labels are stored 0-based
  }
  SUBCASE("endpoints land on 0 and 255 whenever the window is not constant") {
    Rng rng(58);
    for (int it = 0; it < 500; ++it) {
      Window w;
      w.label = 1;
      w.rows = 1 + rng.below(6);
      w.cols = 1 + rng.below(6);
      w.values.resize(w.rows * w.cols);
      for (auto& v : w.values) v = rng.uniform(-50, 50);
      if (w.values.size() < 2) continue;
      auto img = window_to_image(w);
      std::uint8_t mn = 255, mx = 0;
      for (auto p : img.pixels) {
        mn = std::min(mn, p);
        mx = std::max(mx, p);
      }
      CHECK(mn == 0);
      CHECK(mx == 255);
    }
  }
  SUBCASE("min-max scaling is invariant under positive affine maps") {
    Rng rng(59);
    for (int it = 0; it < 300; ++it) {
      Window w;
      w.label = 1;
      w.rows = 3;
      w.cols = 4;
      w.values.resize(12);
      for (auto& v : w.values) v = rng.uniform(-2, 2);
      const double a = 0.01 + 10 * rng.uniform();
      const double b = rng.uniform(-100, 100);
      Window w2 = w;
      for (auto& v : w2.values) v = a * v + b;
      CHECK(window_to_image(w).pixels == window_to_image(w2).pixels);
    }
  }
}

TEST_CASE("csv ingestion") {
  const std::string path = "test_pipe.csv";
  SUBCASE("toy file with one run") {
    std::ofstream f(path);
    f << "fault,run,v1,v2\n1,a,0.5,1.5\n1,a,0.25,2.5\n1,a,0.125,3.5\n";
    f.close();
    auto s = load_csv(path, CsvSchema{});
    CHECK(s.n_vars == 2);
    REQUIRE(s.runs.size() == 1);
    CHECK(s.runs[0].n_samples == 3);
    CHECK(s.runs[0].values[2] == 0.25);
  }
  SUBCASE("shuffled run blocks are regrouped in order") {
    std::ofstream f(path);
    f << "fault,run,v1\n"
      << "1,a,1\n2,b,10\n1,a,2\n2,b,20\n1,a,3\n";
    f.close();
    auto s = load_csv(path, CsvSchema{});
    REQUIRE(s.runs.size() == 2);
    CHECK(s.runs[0].values == std::vector<double>{1, 2, 3});
    CHECK(s.runs[1].values == std::vector<double>{10, 20});
    CHECK(s.runs[1].label == 2);
  }
  SUBCASE("dropped columns are excluded by schema") {
    std::ofstream f(path);
    f << "fault,run,v1,xmv5,v2\n1,a,1,99,2\n1,a,3,99,4\n";
    f.close();
    CsvSchema schema;
    schema.drop_cols = {"xmv5"};
    auto s = load_csv(path, schema);
    CHECK(s.n_vars == 2);
    CHECK(s.var_names == std::vector<std::string>{"v1", "v2"});
    CHECK(s.runs[0].values == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("missing label column is rejected") {
    std::ofstream f(path);
    f << "class,run,v1\n1,a,1\n";
    f.close();
    CHECK_THROWS_AS(load_csv(path, CsvSchema{}), std::runtime_error);
  }
  SUBCASE("ragged and non-numeric rows are rejected with the row number") {
    std::ofstream f(path);
    f << "fault,run,v1,v2\n1,a,1,2\n1,a,3\n";
    f.close();
    try {
      load_csv(path, CsvSchema{});
      FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
      CHECK(message_contains(e, "row 3"));
    }
    std::ofstream g(path);
    g << "fault,run,v1\n1,a,abc\n";
    g.close();
    CHECK_THROWS_AS(load_csv(path, CsvSchema{}), std::runtime_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("csv round trip preserves values exactly") {
  const std::string path = "test_pipe_rt.csv";
  SynthConfig cfg;
  cfg.n_vars = 5;
  cfg.n_classes = 2;
  cfg.runs_per_class = 2;
  cfg.samples_per_run = 30;
  auto s = gen_synthetic(cfg, 77);
  write_csv(s, path);
  auto back = load_csv(path, CsvSchema{});
  REQUIRE(back.runs.size() == s.runs.size());
  for (std::size_t r = 0; r < s.runs.size(); ++r) {
    CHECK(back.runs[r].label == s.runs[r].label);
    CHECK(back.runs[r].values == s.runs[r].values);
  }
  std::remove(path.c_str());
}

TEST_CASE("synthetic generator") {
  SUBCASE("same config and seed give identical output") {
    SynthConfig cfg;
    cfg.n_vars = 8;
    cfg.n_classes = 3;
    cfg.runs_per_class = 2;
    cfg.samples_per_run = 50;
    auto a = gen_synthetic(cfg, 9);
    auto b = gen_synthetic(cfg, 9);
    REQUIRE(a.runs.size() == b.runs.size());
    for (std::size_t i = 0; i < a.runs.size(); ++i)
      CHECK(a.runs[i].values == b.runs[i].values);
  }
  SUBCASE("noiseless, uncoupled classes differ only by a deterministic shift") {
    SynthConfig cfg;
    cfg.n_vars = 10;
    cfg.n_classes = 2;
    cfg.runs_per_class = 2;
    cfg.samples_per_run = 10;
    cfg.coupling = 0.0;
    cfg.noise = 0.0;
    auto s = gen_synthetic(cfg, 4);
    // all runs of a class identical, constant in time
    CHECK(s.runs[0].values == s.runs[1].values);
    for (std::size_t t = 1; t < 10; ++t)
      for (std::size_t i = 0; i < 10; ++i)
        CHECK(s.runs[0].values[t * 10 + i] == s.runs[0].values[i]);
    // the two classes differ somewhere
    CHECK(s.runs[0].values != s.runs[2].values);
  }
  SUBCASE("coupled far pairs show strong sample correlation at gamma = 1") {
    SynthConfig cfg;
    cfg.n_vars = 20;
    cfg.n_classes = 2;
    cfg.runs_per_class = 1;
    cfg.samples_per_run = 10000;
    cfg.coupling = 1.0;
    cfg.noise = 0.5;
    auto pairs = synth_coupled_pairs(cfg, 21);
    REQUIRE(!pairs.empty());
    CHECK(pairs[0].second - pairs[0].first >= cfg.n_vars / 2);

    SeriesSet s = gen_synthetic(cfg, 21);
    SeriesSet class1;
    class1.n_vars = s.n_vars;
    class1.runs.push_back(s.runs[0]);  // class 1: all couplings positive
    auto corr = correlation_matrix(class1);
    CHECK(corr.matrix[pairs[0].first * cfg.n_vars + pairs[0].second] > 0.5);
  }
  SUBCASE("invalid extents are rejected") {
    SynthConfig cfg;
    cfg.n_vars = 0;
    CHECK_THROWS_AS(gen_synthetic(cfg, 1), std::invalid_argument);
  }
}

TEST_CASE("dataset assembly and the GFIM file") {
  SynthConfig cfg;
  cfg.n_vars = 6;
  cfg.n_classes = 3;
  cfg.runs_per_class = 2;
  cfg.samples_per_run = 45;  // floor(45/10) = 4 windows per run
  auto raw = gen_synthetic(cfg, 31);
  auto stats = compute_norm_stats(raw);
  auto ds = make_dataset(normalize(raw, stats), 10);

  CHECK(ds.n == 6);
  CHECK(ds.w == 10);
  CHECK(ds.n_classes == 3);
  CHECK(ds.images.size() == 3 * 2 * 4);

  SUBCASE("images are ordered by (label, run, window)") {
    for (std::size_t i = 1; i < ds.images.size(); ++i) {
      const auto& a = ds.images[i - 1];
      const auto& b = ds.images[i];
      const auto ka = std::make_tuple(a.label, a.run_id, a.index);
      const auto kb = std::make_tuple(b.label, b.run_id, b.index);
      CHECK(ka < kb);
    }
  }
  SUBCASE("ordering does not depend on run order in the input") {
    auto shuffled = normalize(raw, stats);
    std::reverse(shuffled.runs.begin(), shuffled.runs.end());
    auto ds2 = make_dataset(shuffled, 10);
    REQUIRE(ds2.images.size() == ds.images.size());
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
      CHECK(ds2.images[i].label == ds.images[i].label);
      CHECK(ds2.images[i].pixels == ds.images[i].pixels);
    }
  }
  SUBCASE("GFIM round trip") {
    const std::string path = "test_pipe.gfim";
    save_dataset(ds, path);
    auto back = load_dataset(path);
    CHECK(back.n == ds.n);
    CHECK(back.w == ds.w);
    CHECK(back.n_classes == ds.n_classes);
    REQUIRE(back.images.size() == ds.images.size());
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
      CHECK(back.images[i].label == ds.images[i].label);
      CHECK(back.images[i].pixels == ds.images[i].pixels);
    }
    write_dataset_manifest(ds, "synthetic", path + ".manifest");
    std::remove((path + ".manifest").c_str());

    // truncated file
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
    std::remove(path.c_str());
  }
}

TEST_CASE("stats file round trip is exact") {
  NormStats st;
  st.mean = {1.0 / 3.0, -2.7182818284590452, 0.0};
  st.stddev = {3.1415926535897931, 1e-17, 42.0};
  const std::string path = "test_pipe_stats.txt";
  save_stats(st, {"a", "b", "c"}, path);
  std::vector<std::string> names;
  auto back = load_stats(path, &names);
  CHECK(back.mean == st.mean);
  CHECK(back.stddev == st.stddev);
  CHECK(names == std::vector<std::string>{"a", "b", "c"});
  std::remove(path.c_str());
}

TEST_CASE("pipeline determinism end to end") {
  SynthConfig cfg;
  cfg.n_vars = 7;
  cfg.n_classes = 2;
  cfg.runs_per_class = 3;
  cfg.samples_per_run = 60;
  auto build = [&] {
    auto raw = gen_synthetic(cfg, 123);
    auto stats = compute_norm_stats(raw);
    return make_dataset(normalize(raw, stats), 12);
  };
  auto a = build();
  auto b = build();
  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i)
    CHECK(a.images[i].pixels == b.images[i].pixels);
}
