#include <doctest.h>

TEST_CASE("placeholder narrative") { CHECK(true); }
