#include "emlmlasso/csv.hpp"
#include "emlmlasso/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace emlmlasso;

TEST_CASE("parse_csv handles quotes, CRLF and blank lines") {
  const auto t = parse_csv("a,\"b,c\",d\r\n1,\"say \"\"hi\"\"\",3\r\n\r\n4,5,6\n");
  REQUIRE(t.header.size() == 3);
  CHECK(t.header[1] == "b,c");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "say \"hi\"");
  CHECK(t.rows[1][2] == "6");
}

TEST_CASE("parse_csv rejects malformed quoting") {
  CHECK_THROWS_AS(parse_csv("a,b\n1,\"2\n"), Error);
  try {
    parse_csv("a,b\n1,2\"x\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
  }
}

TEST_CASE("parse_double accepts only complete finite numbers") {
  CHECK(parse_double(" 1.5 ").value() == 1.5);
  CHECK(parse_double("-2e3").value() == -2000.0);
  CHECK_FALSE(parse_double("1.5x"));
  CHECK_FALSE(parse_double(""));
  CHECK_FALSE(parse_double("abc"));
  CHECK_FALSE(parse_double("nan"));
  CHECK_FALSE(parse_double("inf"));
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.0}) {
    const auto s = format_double(v);
    CHECK(parse_double(s).value() == v);
  }
}

TEST_CASE("csv_escape quotes only when needed") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("q\"x") == "\"q\"\"x\"");
}

TEST_CASE("exit codes by error kind") {
  CHECK(exit_code(ErrorKind::usage) == 2);
  CHECK(exit_code(ErrorKind::config) == 2);
  CHECK(exit_code(ErrorKind::parse) == 3);
  CHECK(exit_code(ErrorKind::data) == 3);
  CHECK(exit_code(ErrorKind::numerical) == 4);
  const Error e(ErrorKind::data, "boom");
  CHECK(std::string(e.what()) == "boom");
  CHECK(std::string(to_string(e.kind())) == "data");
}
