#include <doctest.h>

#include <string>

#include "support/property_suite.hpp"

using namespace treval;

TEST_CASE("perturbation properties hold over 1000 sentences per kind per level") {
  const auto result = testing::run_perturbation_property_suite(1000);
  // Most synthetic sentences admit all three perturbations; the rest
  // exercise the documented error paths, which the suite also checks.
  CHECK(result.perturbations > 8000);
  for (const auto& violation : result.violations) {
    FAIL_CHECK(violation);
  }
  CHECK(result.violation_count == 0);
}
