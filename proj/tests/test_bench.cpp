#include <doctest.h>

TEST_CASE("placeholder bench") { CHECK(true); }
