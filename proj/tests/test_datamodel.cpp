#include <doctest.h>

TEST_CASE("placeholder datamodel") { CHECK(true); }
