#include <doctest.h>

TEST_CASE("placeholder chunk") { CHECK(true); }
