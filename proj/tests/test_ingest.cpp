#include <doctest.h>

TEST_CASE("placeholder ingest") { CHECK(true); }
