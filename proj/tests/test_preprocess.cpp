#include <doctest.h>

TEST_CASE("placeholder preprocess") { CHECK(true); }
