#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "cforest/dataset.hpp"
#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"
#include "test_util.hpp"

using namespace cforest;

TEST_CASE("dataset constructors validate their invariants") {
  Matrix x(2, 2);
  x.at(0, 0) = 1.0;
  CHECK_THROWS_AS(Dataset(x, {1}), DataError);            // label count
  CHECK_THROWS_AS(Dataset(x, {1, 2}), DataError);         // non-binary label
  CHECK_THROWS_AS(Dataset(x, {1, 0}, std::vector<double>{1.0}), DataError);  // weight count
  CHECK_THROWS_AS(Dataset(x, {1, 0}, std::vector<double>{1.0, 0.0}), DataError);
  CHECK_THROWS_AS(Dataset(x, {1, 0}, std::vector<double>{1.0, -2.0}), DataError);
  CHECK_THROWS_AS(Dataset(x, {1, 0}, std::vector<double>{1.0, std::nan("")}), DataError);
  CHECK_THROWS_AS(Dataset(x, {1, 0}, std::vector<std::string>{"a"}), DataError);
  Matrix bad(1, 1);
  bad.at(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Dataset(std::move(bad), {0}), DataError);
  CHECK_NOTHROW(Dataset(x, {1, 0}, std::vector<double>{0.5, 2.0}, {"a", "b"}));
}

TEST_CASE("column and row selection keep order and metadata") {
  Matrix x(3, 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) x.at(r, c) = r * 10.0 + c;
  }
  Dataset ds(std::move(x), {1, 0, 1}, {1.0, 2.0, 3.0}, {"a", "b", "c"});

  const auto cols = ds.select_columns(std::vector<std::size_t>{2, 0});
  CHECK(cols.cols() == 2);
  CHECK(cols.feature_names() == std::vector<std::string>{"c", "a"});
  CHECK(cols.features().at(1, 0) == 12.0);
  CHECK(cols.features().at(1, 1) == 10.0);
  CHECK(cols.labels() == ds.labels());
  CHECK(cols.weights() == ds.weights());

  const auto rows = ds.select_rows(std::vector<std::size_t>{2, 2, 0});
  CHECK(rows.rows() == 3);
  CHECK(rows.features().at(0, 1) == 21.0);
  CHECK(rows.labels() == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(rows.weights() == std::vector<double>{3.0, 3.0, 1.0});

  CHECK_THROWS_AS(ds.select_columns(std::vector<std::size_t>{3}), DataError);
  CHECK_THROWS_AS(ds.select_rows(std::vector<std::size_t>{9}), DataError);
}

TEST_CASE("csv round trip is byte exact") {
  std::mt19937 rng(6001);
  auto ds = testutil::random_dataset(rng, 60, 4);
  testutil::TempDir tmp("csvrt");
  const auto path = tmp.file("data.csv");
  write_csv(ds, path);
  const std::string first = testutil::slurp(path);
  const Dataset loaded = load_csv(path, true, ColumnRef::by_name("label"));
  CHECK(loaded.rows() == ds.rows());
  CHECK(loaded.cols() == ds.cols());
  CHECK(loaded.labels() == ds.labels());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.cols(); ++c)
      CHECK(loaded.features().at(r, c) == ds.features().at(r, c));
  }
  const auto again = tmp.file("again.csv");
  write_csv(loaded, again);
  CHECK(testutil::slurp(again) == first);
}

TEST_CASE("csv weights column round trips") {
  Matrix x(2, 1);
  x.at(0, 0) = 1.5;
  x.at(1, 0) = -0.25;
  Dataset ds(std::move(x), {1, 0}, {0.125, 8.0}, {"v"});
  testutil::TempDir tmp("csvw");
  const auto path = tmp.file("w.csv");
  write_csv(ds, path, true);
  CHECK(testutil::slurp(path) == "v,label,weight\n1.5,1,0.125\n-0.25,0,8\n");
  const Dataset loaded =
      load_csv(path, true, ColumnRef::by_name("label"), ColumnRef::by_name("weight"));
  CHECK(loaded.weights() == std::vector<double>{0.125, 8.0});
  CHECK(loaded.cols() == 1);
}

TEST_CASE("csv loader reports the offending location") {
  testutil::TempDir tmp("csverr");
  const auto path = tmp.file("bad.csv");

  testutil::spit(path, "a,b,label\n1,2,1\n3,oops,0\n");
  CHECK_THROWS_WITH_AS(load_csv(path, true, ColumnRef::by_name("label")),
                       doctest::Contains("row 3"), DataError);

  testutil::spit(path, "a,b,label\n1,2,1\n3,4\n");
  CHECK_THROWS_WITH_AS(load_csv(path, true, ColumnRef::by_name("label")),
                       doctest::Contains("row 3"), DataError);

  testutil::spit(path, "a,b,label\n1,2,0.5\n");
  CHECK_THROWS_AS(load_csv(path, true, ColumnRef::by_name("label")), DataError);

  testutil::spit(path, "a,b,label\n1,2,1\n");
  CHECK_THROWS_AS(load_csv(path, true, ColumnRef::by_name("missing")), ConfigError);
  CHECK_THROWS_AS(load_csv(path, true, ColumnRef::by_index(3)), ConfigError);

  // Name lookup without a header is a configuration mistake even when every
  // cell parses.
  testutil::spit(path, "1,2,1\n3,4,0\n");
  CHECK_THROWS_AS(load_csv(path, false, ColumnRef::by_name("label")), ConfigError);

  testutil::spit(path, "a,b,label\n");
  CHECK_THROWS_AS(load_csv(path, true, ColumnRef::by_name("label")), DataError);
  CHECK_THROWS_AS(load_csv(tmp.file("absent.csv"), true, ColumnRef::by_name("label")), IoError);
}

TEST_CASE("headerless csv uses positional columns and synthesized names") {
  testutil::TempDir tmp("csvnh");
  const auto path = tmp.file("plain.csv");
  testutil::spit(path, "0.5,1,7\n0.25,0,9\n");
  const Dataset ds = load_csv(path, false, ColumnRef::by_index(1));
  CHECK(ds.cols() == 2);
  CHECK(ds.labels() == std::vector<std::uint8_t>{1, 0});
  CHECK(ds.feature_names() == std::vector<std::string>{"f0", "f1"});
  CHECK(ds.features().at(0, 1) == 7.0);
}

TEST_CASE("column ref parses digits as positions and anything else as a name") {
  CHECK(ColumnRef::parse("3").index == 3);
  CHECK_FALSE(ColumnRef::parse("3").name.has_value());
  CHECK(ColumnRef::parse("label").name == "label");
  CHECK(ColumnRef::parse("f3").name == "f3");
  CHECK(ColumnRef::parse("-1").name == "-1");
}

TEST_CASE("csv matrix loader drops the named column") {
  testutil::TempDir tmp("csvm");
  const auto path = tmp.file("m.csv");
  testutil::spit(path, "a,b,c\n1,2,3\n4,5,6\n");
  const auto [m, names] = load_csv_matrix(path, true, ColumnRef::by_name("b"));
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 2);
  CHECK(m.at(1, 1) == 6.0);
  CHECK(names == std::vector<std::string>{"a", "c"});
  const auto [full, all_names] = load_csv_matrix(path, true);
  CHECK(full.cols() == 3);
}

TEST_CASE("stratified kfold balances each class to within one row") {
  std::mt19937 rng(6002);
  for (int k : {2, 3, 5}) {
    auto ds = testutil::random_dataset(rng, 137, 2);
    const FoldPlan plan = kfold_split(ds, k, 99);
    REQUIRE(plan.assignments.size() == ds.rows());
    std::vector<std::size_t> pos(k, 0), neg(k, 0);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      const int f = plan.assignments[r];
      REQUIRE(f >= 0);
      REQUIRE(f < k);
      (ds.labels()[r] ? pos : neg)[f] += 1;
    }
    const auto [pmin, pmax] = std::minmax_element(pos.begin(), pos.end());
    const auto [nmin, nmax] = std::minmax_element(neg.begin(), neg.end());
    CHECK(*pmax - *pmin <= 1);
    CHECK(*nmax - *nmin <= 1);
  }
}

TEST_CASE("fold plan row queries partition the rows") {
  std::mt19937 rng(6003);
  auto ds = testutil::random_dataset(rng, 50, 2);
  const FoldPlan plan = kfold_split(ds, 4, 7);
  std::set<std::size_t> seen;
  for (int f = 0; f < 4; ++f) {
    const auto in = plan.rows_in(f);
    const auto out = plan.rows_outside(f);
    CHECK(in.size() + out.size() == 50);
    CHECK(std::is_sorted(in.begin(), in.end()));
    CHECK(std::is_sorted(out.begin(), out.end()));
    for (auto r : in) CHECK(seen.insert(r).second);
  }
  CHECK(seen.size() == 50);
}

TEST_CASE("kfold is deterministic per seed and rejects bad shapes") {
  std::mt19937 rng(6004);
  auto ds = testutil::random_dataset(rng, 60, 2);
  const FoldPlan a = kfold_split(ds, 3, 5);
  const FoldPlan b = kfold_split(ds, 3, 5);
  CHECK(a.assignments == b.assignments);
  const FoldPlan c = kfold_split(ds, 3, 6);
  CHECK(a.assignments != c.assignments);

  CHECK_THROWS_AS(kfold_split(ds, 1, 0), ConfigError);
  Matrix tiny(3, 1);
  tiny.at(0, 0) = 1.0;
  Dataset small(std::move(tiny), {1, 0, 0});
  CHECK_THROWS_AS(kfold_split(small, 2, 0), DataError);  // one positive only
}

TEST_CASE("balanced weights upweight the minority class by the count ratio") {
  std::vector<std::uint8_t> labels{1, 0, 0, 0, 0, 0, 1, 0};
  const auto w = balanced_weights(labels);
  for (std::size_t i = 0; i < labels.size(); ++i)
    CHECK(w[i] == (labels[i] ? 3.0 : 1.0));

  std::vector<std::uint8_t> flipped{0, 1, 1, 1};
  const auto w2 = balanced_weights(flipped);
  CHECK(w2[0] == 3.0);
  CHECK(w2[1] == 1.0);

  // Weighted class masses end up equal (exactly here; to rounding at scale).
  double pos_mass = 0.0, neg_mass = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos_mass : neg_mass) += w[i];
  CHECK(pos_mass == doctest::Approx(neg_mass).epsilon(1e-12));

  CHECK_THROWS_AS(balanced_weights(std::vector<std::uint8_t>{1, 1}), DataError);
}

TEST_CASE("synthetic data hits the requested positive count exactly") {
  for (auto [n, rate] : std::vector<std::pair<std::size_t, double>>{
           {1000, 0.01}, {500, 0.5}, {333, 0.1}}) {
    const auto ds = synth_imbalanced(n, 10, 5, rate, 77);
    CHECK(ds.rows() == n);
    CHECK(ds.positives() ==
          static_cast<std::size_t>(std::llround(rate * static_cast<double>(n))));
  }
}

TEST_CASE("synthetic data is deterministic per seed and distinct across seeds") {
  const auto a = synth_imbalanced(200, 8, 4, 0.1, 1);
  const auto b = synth_imbalanced(200, 8, 4, 0.1, 1);
  const auto c = synth_imbalanced(200, 8, 4, 0.1, 2);
  CHECK(a.labels() == b.labels());
  bool same = true, differs = false;
  for (std::size_t r = 0; r < a.rows() && same; ++r) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (a.features().at(r, j) != b.features().at(r, j)) same = false;
      if (a.features().at(r, j) != c.features().at(r, j)) differs = true;
    }
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("synthetic informative columns separate the classes, noise does not") {
  const std::size_t d_informative = 6;
  const auto ds = synth_imbalanced(4000, 12, d_informative, 0.25, 5);
  // Mean-shift columns (j % 3 == 0) show a clear class gap; noise columns
  // stay near zero separation.
  for (std::size_t j : {std::size_t{0}, std::size_t{3}}) {
    double pos_mean = 0.0, neg_mean = 0.0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      if (ds.labels()[r]) {
        pos_mean += ds.features().at(r, j);
        ++pos;
      } else {
        neg_mean += ds.features().at(r, j);
        ++neg;
      }
    }
    pos_mean /= static_cast<double>(pos);
    neg_mean /= static_cast<double>(neg);
    CHECK(std::fabs(pos_mean - neg_mean) > 0.3);
  }
  for (std::size_t j = d_informative; j < 12; ++j) {
    double pos_mean = 0.0, neg_mean = 0.0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      if (ds.labels()[r]) {
        pos_mean += ds.features().at(r, j);
        ++pos;
      } else {
        neg_mean += ds.features().at(r, j);
        ++neg;
      }
    }
    pos_mean /= static_cast<double>(pos);
    neg_mean /= static_cast<double>(neg);
    CHECK(std::fabs(pos_mean - neg_mean) < 0.2);
  }
}

TEST_CASE("synthetic generator rejects bad shapes") {
  CHECK_THROWS_AS(synth_imbalanced(1, 5, 2, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(synth_imbalanced(100, 0, 0, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(synth_imbalanced(100, 5, 6, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(synth_imbalanced(100, 5, 2, 0.0, 0), ConfigError);
  CHECK_THROWS_AS(synth_imbalanced(100, 5, 2, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(synth_imbalanced(100, 5, 2, 0.0001, 0), ConfigError);  // rounds to zero
}

TEST_CASE("shortest round-trip formatting survives parse and rejects garbage") {
  std::mt19937 rng(6005);
  std::uniform_real_distribution<double> dist(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = dist(rng);
    double back = 0.0;
    REQUIRE(detail::parse_double(detail::format_double(v), back));
    CHECK(back == v);
  }
  double out;
  CHECK_FALSE(detail::parse_double("", out));
  CHECK_FALSE(detail::parse_double("1.5x", out));
  CHECK_FALSE(detail::parse_double(" 1.5", out));
  std::size_t n;
  CHECK_FALSE(detail::parse_size("12.5", n));
  CHECK(detail::parse_size("12", n));
  CHECK(n == 12);
}
