#include <doctest.h>

TEST_CASE("placeholder llm") { CHECK(true); }
