#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vpfp/sweep.hpp"

using namespace vpfp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c = parse_config(R"({
    "n": [48], "seeds": [5], "sigma": [0.5], "dt": 0.05, "t_end": 0.2,
    "metrics": ["deviation", "sup_deviation", "exceedance", "w2", "h1", "l1", "ckp_slack"],
    "mean_field": {"cells": 16}, "phase_grid": {"cells": 4}
  })");
  c.out = out.string();
  return c;
}

SweepTable planted_table(double slope) {
  SweepTable t;
  t.metrics = {Metric::sup_deviation};
  for (std::size_t n : {256, 512, 1024, 2048})
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      SweepRow r;
      r.n = n;
      r.delta = 0.25;
      r.sigma = 0.5;
      r.seed = seed;
      r.t = 1.0;
      r.step = 100;
      r.values = {2.0 * std::pow(static_cast<double>(n), slope) * (1.0 + 0.01 * static_cast<double>(seed - 2))};
      t.rows.push_back(r);
    }
  return t;
}

}  // namespace

TEST_SUITE("sweep") {
  TEST_CASE("number formatting round-trips") {
    CHECK(format_number(0.25) == "0.25");
    CHECK(format_number(0.1 + 0.2) == "0.30000000000000004");
    CHECK(format_number(std::nan("")) == "nan");
    CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  }

  TEST_CASE("single cell sweep writes one row per checkpoint, reproducibly") {
    const fs::path dir = fs::temp_directory_path() / "vpfp_unit_sweep";
    fs::remove_all(dir);
    const SweepTable t = run_sweep(small_config(dir));
    REQUIRE(t.rows.size() == 5);
    for (const auto& r : t.rows) {
      CHECK(r.status == "ok");
      CHECK(r.values.size() == 7);
      CHECK(r.values[5].value() >= 0.0);
    }
    CHECK(t.rows.front().t == 0.0);
    CHECK(t.rows.back().t == 0.2);
    CHECK(t.rows.front().values[0] == 0.0);
    const std::string first = slurp(dir / "sweep.csv");
    CHECK(first.rfind(csv_header(t.metrics), 0) == 0);
    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(dir / "config.json"));
    run_sweep(small_config(dir));
    CHECK(slurp(dir / "sweep.csv") == first);

    const json s = json::parse(report({(dir / "sweep.csv").string()}));
    CHECK(s["row_count"] == 5);
    bool saw_note = false;
    for (const auto& series : s["series"])
      if (series.contains("note") && series["note"] == "insufficient points") saw_note = true;
    CHECK(saw_note);
    CHECK(s["verdicts"]["ckp_audit"]["pass"] == true);
    fs::remove_all(dir);
  }

  TEST_CASE("summary recovers a planted slope") {
    const json s = json::parse(summarize({planted_table(-0.25)}));
    bool found = false;
    for (const auto& series : s["series"]) {
      if (series["metric"] != "sup_deviation") continue;
      CHECK(series["fit"]["slope"].get<double>() == doctest::Approx(-0.25).epsilon(1e-9));
      found = true;
    }
    CHECK(found);
    CHECK(s["verdicts"]["sup_deviation_median_decreasing/sigma=0.5"]["pass"] == true);
    CHECK(s["verdicts"]["sup_deviation_slope/sigma=0.5"]["pass"] == true);
    const json flat = json::parse(summarize({planted_table(-0.05)}));
    CHECK(flat["verdicts"]["sup_deviation_slope/sigma=0.5"]["pass"] == false);
  }

  TEST_CASE("CSV round trip including failed rows") {
    SweepTable t = planted_table(-0.25);
    SweepRow failed;
    failed.n = 4096;
    failed.delta = 0.25;
    failed.sigma = 0.5;
    failed.seed = 9;
    failed.status = "failed";
    failed.values.assign(1, std::nullopt);
    failed.note = "integrator blow-up at step 3, particle 7";
    t.rows.push_back(failed);
    const std::string text = to_csv(t);
    const SweepTable back = parse_csv(text);
    CHECK(back.rows.back().status == "failed");
    CHECK(!back.rows.back().t);
    CHECK(back.rows.back().note == "integrator blow-up at step 3; particle 7");
    CHECK(to_csv(back) == text);
    const json s = json::parse(summarize({back}));
    CHECK(s["failed_count"] == 1);
  }

  TEST_CASE("malformed rows report their line") {
    const std::string header = csv_header({Metric::sup_deviation}) + "\n";
    const std::string good = "1,256,0.25,0.5,1,1,100,ok,0.5,\n";
    try {
      parse_csv(header + good + "1,256,0.25,0.5,1,1,100,ok,zero,\n");
      FAIL("expected a parse error");
    } catch (const CsvError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse_csv(header + "1,256,0.25\n"), CsvError);
    CHECK_THROWS_AS(parse_csv("N,delta\n"), CsvError);
    CHECK_NOTHROW(parse_csv(header + good));
  }
}
