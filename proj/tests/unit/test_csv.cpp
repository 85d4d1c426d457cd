#include "simpop/csv.hpp"
#include "simpop/error.hpp"
#include "support/gen.hpp"

#include <doctest.h>

#include <cmath>

namespace csv = simpop::csv;

TEST_CASE("parse keeps leading comments and skips blank lines") {
    const auto t = csv::parse("# one\n# two\na,b\r\n1,2\n\n3,\n");
    CHECK(t.comments == std::vector<std::string>{"# one", "# two"});
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][1].empty());
    CHECK(t.require("b") == 1);
    CHECK_FALSE(t.find("c").has_value());
    CHECK_THROWS_AS(t.require("c"), simpop::MissingColumn);
}

TEST_CASE("ragged rows are rejected with their position") {
    try {
        csv::parse("a,b,c\n1,2,3\n4,5\n");
        FAIL("expected ParseFailure");
    } catch (const simpop::ParseFailure& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == "c");
    }
}

TEST_CASE("number fields") {
    CHECK(csv::parse_double("", 1, "x") == std::nullopt);
    CHECK(*csv::parse_double("-1.5e3", 1, "x") == -1500.0);
    CHECK_THROWS_AS(csv::parse_double("1.5x", 1, "x"), simpop::ParseFailure);
    CHECK_THROWS_AS(csv::parse_double("nan", 1, "x"), simpop::ParseFailure);
    CHECK(csv::parse_int("42", 1, "n") == 42);
    CHECK_THROWS_AS(csv::parse_int("4.2", 1, "n"), simpop::ParseFailure);
    CHECK_THROWS_AS(csv::parse_int("", 1, "n"), simpop::ParseFailure);
    CHECK(csv::format(std::nan("")).empty());
    CHECK(csv::format(-0.0) == "0");
}

TEST_CASE("format is the shortest round-tripping decimal") {
    gen::for_all(11, 2000, [](gen::Gen& g, int) {
        const double v = g.normal() * std::pow(10.0, g.integer(-12, 12));
        const auto text = csv::format(v);
        CHECK(*csv::parse_double(text, 1, "v") == v);
    });
    CHECK(csv::format(0.1) == "0.1");
    CHECK(csv::format(1e21) == "1e+21");
}
