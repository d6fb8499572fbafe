// Copyright 2026 The dcontrib Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "dcontrib/error.hpp"
#include "dcontrib/util.hpp"

using namespace dcontrib;

TEST_CASE("format_double round-trips and spells non-finite values") {
  for (double v : {0.1, -1.5e-300, 1e300, 123456789.125, 2.0 / 3.0}) {
    double back = 0.0;
    REQUIRE(parse_double(format_double(v), back));
    CHECK(back == v);
  }
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("parse_double is strict") {
  double v = 0.0;
  CHECK(parse_double(" 2.5 ", v));
  CHECK(v == 2.5);
  CHECK_FALSE(parse_double("2.5x", v));
  CHECK_FALSE(parse_double("", v));
}

TEST_CASE("mix_seed separates salts") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(5, "actor1") == mix_seed(5, "actor1"));
  CHECK(mix_seed(5, "actor1") != mix_seed(5, "actor2"));
}

TEST_CASE("csv records with quotes") {
  const auto f = split_csv_record("a,\"b,c\",\"d\"\"e\",");
  REQUIRE(f.size() == 4);
  CHECK(f[1] == "b,c");
  CHECK(f[2] == "d\"e");
  CHECK(f[3].empty());
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
}

TEST_CASE("reading a missing file is an io error") {
  try {
    read_text_file("/nonexistent/dir/file.txt");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}
