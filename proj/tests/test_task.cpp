// SPDX-License-Identifier: MIT
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "femlab/errors.hpp"
#include "femlab/task.hpp"

using namespace femlab;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("answer_of is the modular prefix sum read-off") {
  CHECK(answer_of({0, 0, 0}, 5) == 0);
  CHECK(answer_of({1, 2, 3}, 5) == 1);  // 6 mod 5
  CHECK(answer_of({4, 4}, 5) == 3);     // 8 mod 5
  CHECK(answer_of({1}, 2) == 1);
  CHECK(answer_of({1, 1}, 2) == 0);
}

TEST_CASE("generate_dataset is deterministic and correctly labeled") {
  const TaskShape shape{5, 4, 6, true};
  const Dataset a = generate_dataset(shape, 100, 50, 99);
  const Dataset b = generate_dataset(shape, 100, 50, 99);
  const Dataset c = generate_dataset(shape, 100, 50, 100);

  REQUIRE(a.train.size() == 100);
  REQUIRE(a.test.size() == 50);

  bool identical = true;
  for (std::size_t i = 0; i < a.train.size(); ++i)
    identical = identical && a.train[i].x == b.train[i].x &&
                a.train[i].y_star == b.train[i].y_star;
  CHECK(identical);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.train.size(); ++i)
    any_diff = any_diff || a.train[i].x != c.train[i].x;
  CHECK(any_diff);

  for (const Datapoint& dp : a.train) {
    REQUIRE(dp.x.size() == 4);
    for (int t : dp.x) REQUIRE((t >= 0 && t < 5));
    REQUIRE(dp.y_star == answer_of(dp.x, 5));
  }
}

TEST_CASE("test split does not depend on the train count") {
  const TaskShape shape{5, 4, 6, true};
  const Dataset small = generate_dataset(shape, 10, 40, 7);
  const Dataset large = generate_dataset(shape, 500, 40, 7);
  bool identical = true;
  for (std::size_t i = 0; i < small.test.size(); ++i)
    identical = identical && small.test[i].x == large.test[i].x &&
                small.test[i].y_star == large.test[i].y_star;
  CHECK(identical);
}

TEST_CASE("datapoint files round-trip exactly") {
  const TaskShape shape{4, 3, 5, true};
  const Dataset ds = generate_dataset(shape, 30, 1, 5);
  const auto path = temp_file("femlab_test_roundtrip.data");
  write_datapoints(path.string(), 4, 3, ds.train);

  const DatapointFile file = read_datapoints(path.string());
  CHECK(file.vocab == 4);
  CHECK(file.question_len == 3);
  REQUIRE(file.records.size() == ds.train.size());
  bool identical = true;
  for (std::size_t i = 0; i < file.records.size(); ++i)
    identical = identical && file.records[i].x == ds.train[i].x &&
                file.records[i].y_star == ds.train[i].y_star;
  CHECK(identical);
  std::filesystem::remove(path);
}

TEST_CASE("malformed datapoint files are rejected with location info") {
  const auto path = temp_file("femlab_test_malformed.data");
  auto write_and_expect_throw = [&](const std::string& content) {
    std::ofstream out(path);
    out << content;
    out.close();
    CHECK_THROWS_AS((void)read_datapoints(path.string()), IoError);
  };
  SUBCASE("missing file") {
    std::filesystem::remove(path);
    CHECK_THROWS_AS((void)read_datapoints(path.string()), IoError);
  }
  SUBCASE("bad header") { write_and_expect_throw("not-a-header\n0|0\n"); }
  SUBCASE("token out of range") {
    write_and_expect_throw("femlab-data v=2 n=1\n5|0\n");
  }
  SUBCASE("answer out of range") {
    write_and_expect_throw("femlab-data v=2 n=1\n1|4\n");
  }
  SUBCASE("wrong arity") {
    write_and_expect_throw("femlab-data v=2 n=2\n1|1\n");
  }
  SUBCASE("junk suffix") {
    write_and_expect_throw("femlab-data v=2 n=1\n1|1junk\n");
  }
  std::filesystem::remove(path);
}

TEST_CASE("TaskShape validation") {
  const auto shape = [](int v, int n, int l) {
    return TaskShape{v, n, l, true};
  };
  CHECK_THROWS_AS(shape(1, 1, 1).validate(), ContractViolation);
  CHECK_THROWS_AS(shape(2, 0, 1).validate(), ContractViolation);
  CHECK_THROWS_AS(shape(2, 1, 0).validate(), ContractViolation);
  CHECK_NOTHROW(shape(2, 1, 1).validate());
}
