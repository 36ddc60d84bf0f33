#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "napsumq/schema.hpp"

using namespace napsumq;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = std::string("/tmp/napsumq_test_") + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("schema invariants") {
  CHECK_THROWS_AS(Schema::with_cardinalities({{"a", 1}}), ConfigError);
  CHECK_THROWS_AS(Schema::with_cardinalities({{"a", 2}, {"a", 3}}), ConfigError);
  Schema s = Schema::with_cardinalities({{"a", 3}, {"b", 4}});
  CHECK(s.domain_size().value() == 12);
}

TEST_CASE("domain size overflow is flagged") {
  std::vector<std::pair<std::string, int>> spec;
  for (int i = 0; i < 70; ++i) spec.emplace_back("v" + std::to_string(i), 2);
  Schema s = Schema::with_cardinalities(spec);
  CHECK(!s.domain_size().has_value());
  CHECK(s.log_domain_size() == Catch::Approx(70 * std::log(2.0)));
}

TEST_CASE("load_csv basic encoding") {
  const std::string path = write_temp("basic.csv",
                                      "x1,x2,x3\n0,1,0\n1,0,1\n0,0,0\n1,1,1\n");
  Dataset ds = load_csv(path, toy_schema(), MissingPolicy::error);
  CHECK(ds.num_rows() == 4);
  CHECK(ds.codes()(0, 1) == 1);
  CHECK(ds.codes()(3, 2) == 1);
  std::remove(path.c_str());
}

TEST_CASE("load_csv reorders columns to schema order") {
  const std::string path = write_temp("reorder.csv", "x3,x1,x2\n1,0,1\n");
  Dataset ds = load_csv(path, toy_schema(), MissingPolicy::error);
  CHECK(ds.codes()(0, 0) == 0);
  CHECK(ds.codes()(0, 1) == 1);
  CHECK(ds.codes()(0, 2) == 1);
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects unknown labels, naming them") {
  const std::string path = write_temp("badlabel.csv", "x1,x2,x3\n0,1,2\n");
  try {
    load_csv(path, toy_schema(), MissingPolicy::error);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("'2'") != std::string::npos);
    CHECK(what.find("x3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("load_csv missing policy") {
  const std::string path =
      write_temp("missing.csv", "x1,x2,x3\n0,1,0\n,1,0\n1,0,1\n1,,0\n");
  Dataset dropped = load_csv(path, toy_schema(), MissingPolicy::drop_rows);
  CHECK(dropped.num_rows() == 2);
  CHECK_THROWS_AS(load_csv(path, toy_schema(), MissingPolicy::error), ConfigError);
  std::remove(path.c_str());
}

TEST_CASE("csv round trip preserves labels") {
  Dataset ds = sample_toy_data(50, 7);
  const std::string path = "/tmp/napsumq_test_roundtrip.csv";
  write_csv(ds, path);
  Dataset back = load_csv(path, ds.schema(), MissingPolicy::error);
  CHECK(back.codes() == ds.codes());
  std::remove(path.c_str());
}

TEST_CASE("toy data shape and determinism") {
  Dataset one = sample_toy_data(1, 3);
  CHECK(one.num_rows() == 1);
  for (int j = 0; j < 3; ++j) {
    CHECK(one.codes()(0, j) >= 0);
    CHECK(one.codes()(0, j) <= 1);
  }

  Dataset a = sample_toy_data(500, 42);
  Dataset b = sample_toy_data(500, 42);
  CHECK(a.codes() == b.codes());
  Dataset c = sample_toy_data(500, 43);
  CHECK(a.codes() != c.codes());

  CHECK_THROWS_AS(sample_toy_data(0, 1), ConfigError);
}

TEST_CASE("toy data column means near one half") {
  Dataset ds = sample_toy_data(2000, 11);
  const auto& m = ds.codes();
  for (int j = 0; j < 2; ++j) {
    const double mean = m.col(j).cast<double>().mean();
    CHECK(mean > 0.45);
    CHECK(mean < 0.55);
  }
}

TEST_CASE("toy logistic effect matches the analytic model") {
  // P(x3=1|x1=1) - P(x3=1|x1=0) = sigmoid(1) - sigmoid(0) ~ 0.2311
  Dataset ds = sample_toy_data(100000, 5);
  const auto& m = ds.codes();
  double n1 = 0, s1 = 0, n0 = 0, s0 = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m(i, 0) == 1) {
      n1 += 1;
      s1 += m(i, 2);
    } else {
      n0 += 1;
      s0 += m(i, 2);
    }
  }
  const double diff = s1 / n1 - s0 / n0;
  CHECK(diff == Catch::Approx(0.23105857863).margin(0.02));
}
