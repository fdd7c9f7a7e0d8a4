#include <doctest.h>

TEST_CASE("placeholder detectors") { CHECK(true); }
