#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <string>

#include "vpfp/config.hpp"

using namespace vpfp;

namespace {

std::vector<std::string> violations_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigViolations& e) {
    return e.violations();
  }
  return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults parse from an empty object") {
    const ExperimentConfig c = parse_config("{}");
    CHECK(c.mode == TheoremMode::free);
    CHECK(c.dim == 3);
    CHECK(c.n == std::vector<std::size_t>{256});
    CHECK(!c.dt);
    CHECK(c.threshold(256) == doctest::Approx(std::pow(256.0, -0.25)));
  }

  TEST_CASE("thm1 rejects delta at or above 1/d with the field path") {
    const auto v = violations_of(R"({"mode": "thm1", "delta": 0.4})");
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "/delta: delta must be < 1/3");
    CHECK(mentions(violations_of(R"({"mode": "thm1", "sigma": [0.0]})"), "/sigma/0"));
    CHECK(mentions(violations_of(R"({"mode": "thm1", "kernel": {"family": "hlp"}})"), "/kernel/family"));
  }

  TEST_CASE("thm2 window for delta") {
    const std::string base = R"({"mode": "thm2", "kernel": {"family": "hlp"}, "lambda1": 0.05, "lambda2": 0.31, )";
    // (1 - 0.31) / 2 = 0.345 and (0.05 + 0.93 + 1) / 6 = 0.33
    CHECK(mentions(violations_of(base + R"("delta": 0.334})"), "delta must be < min"));
    CHECK(violations_of(base + R"("delta": 0.3334})").size() == 1);
    CHECK(violations_of(R"({"mode": "thm2", "kernel": {"family": "hlp"}, "lambda1": 0.05, "lambda2": 0.32, "delta": 0.334})")
              .empty());
    CHECK(mentions(violations_of(base + R"("delta": 0.3})"), ">= 1/3"));
    CHECK(mentions(violations_of(R"({"mode": "thm2", "kernel": {"family": "hlp"}, "lambda1": 0.05, "lambda2": 0.34, "delta": 0.334})"),
                   "/lambda2"));
    CHECK(mentions(violations_of(R"({"mode": "thm2", "kernel": {"family": "hlp"}, "lambda2": 0.31, "delta": 0.334})"),
                   "lambda1 is required"));
  }

  TEST_CASE("thm2 exceedance threshold uses lambda2") {
    const ExperimentConfig c = parse_config(
        R"({"mode": "thm2", "kernel": {"family": "hlp"}, "lambda1": 0.05, "lambda2": 0.32, "delta": 0.334})");
    CHECK(c.effective_threshold_exponent() == 0.32);
    CHECK(parse_config(R"({"delta": 0.2, "threshold_exponent": 0.15})").effective_threshold_exponent() == 0.15);
  }

  TEST_CASE("every violation is reported at once") {
    const auto v = violations_of(R"({"seeds": [], "n": [1], "t_end": -1, "bogus": 3})");
    CHECK(mentions(v, "/seeds: seeds list is empty"));
    CHECK(mentions(v, "/n/0"));
    CHECK(mentions(v, "/t_end"));
    CHECK(mentions(v, "/bogus: unknown field"));
    CHECK(mentions(violations_of(R"({"n": [64, 64]})"), "repeat"));
    CHECK(mentions(violations_of(R"({"output_times": [0.5, 0.25]})"), "/output_times/1"));
    CHECK(mentions(violations_of(R"({"dim": 1, "kernel": {"family": "hlp"}})"), "/kernel"));
    CHECK(mentions(violations_of(R"({"metrics": ["pde_l1"]})"), "pde_l1"));
    CHECK(mentions(violations_of(R"({"dt": "soon"})"), "/dt"));
    CHECK(mentions(violations_of("[1, 2]"), "top level"));
  }

  TEST_CASE("overrides and canonical round trip") {
    const std::string text = apply_overrides(
        R"({"n": [64]})", {"n=[128,256]", "mean_field.cells=16", "out=runs/a", "kernel.family=\"lp\""});
    const ExperimentConfig c = parse_config(text);
    CHECK(c.n == std::vector<std::size_t>{128, 256});
    CHECK(c.mean_field.cells == 16);
    CHECK(c.out == "runs/a");
    const ExperimentConfig again = parse_config(to_json(c));
    CHECK(to_json(again) == to_json(c));
    CHECK_THROWS_AS(apply_overrides("{}", {"no_equals_sign"}), ConfigError);

    const ExperimentConfig t2 = parse_config(
        R"({"mode": "thm2", "kernel": {"family": "hlp"}, "lambda1": 0.05, "lambda2": 0.32, "delta": 0.334, "dt": 0.005})");
    const ExperimentConfig t2b = parse_config(to_json(t2));
    CHECK(t2b.lambda2 == 0.32);
    CHECK(t2b.dt == 0.005);
  }

  TEST_CASE("thread override from the environment") {
    ::setenv("VPFP_THREADS", "3", 1);
    CHECK(resolve_threads(8) == 3);
    ::setenv("VPFP_THREADS", "x", 1);
    CHECK_THROWS_AS(resolve_threads(8), ConfigError);
    ::unsetenv("VPFP_THREADS");
    CHECK(resolve_threads(5) == 5);
  }
}
