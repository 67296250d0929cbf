#include "doctest.h"

#include <cmath>

#include "dvhkit/error.hpp"
#include "dvhkit/evaluation.hpp"
#include "helpers.hpp"

using namespace dvhkit;

TEST_CASE("dose bands on the canonical grid") {
  const auto g = DoseGrid::canonical();
  CHECK(band_bins(g, DoseBand::Full).size() == 642);
  CHECK(band_bins(g, DoseBand::Low).size() == 199);           // 10..1990
  CHECK(band_bins(g, DoseBand::Intermediate).size() == 200);  // 2000..3990
  CHECK(band_bins(g, DoseBand::High).size() == 243);          // 4000..6420
  CHECK(band_label(DoseBand::High) == "4000-6420");
}

TEST_CASE("median of odd and even samples") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("error report averages and variance") {
  const DoseGrid g = DoseGrid::canonical();
  const std::vector<double> a(642, 50.0), b(642, 47.0), c(642, 44.0);
  const std::vector<CumulativeDVH> actual = {CumulativeDVH(g, a), CumulativeDVH(g, a)};
  const std::vector<CumulativeDVH> pred = {CumulativeDVH(g, b), CumulativeDVH(g, c)};
  const std::vector<std::string> ids = {"p1", "p2"};
  const auto r = cohort_error_report("LR", Organ::Bladder, "test", ids, actual, pred);
  CHECK(r.band_avg[0] == doctest::Approx(4.5));
  CHECK(r.point_avg[2] == doctest::Approx(4.5));
  CHECK(r.variance == doctest::Approx(4.5));  // (1.5^2 + 1.5^2) / 1
  const std::vector<std::string> one = {"p1"};
  const auto single = cohort_error_report("LR", Organ::Bladder, "test", one, std::span(actual).first(1),
                                          std::span(pred).first(1));
  CHECK(single.variance == 0.0);
}

TEST_CASE("perfect predictions give all-zero rows") {
  const auto cohort = testing::small_cohort(8);
  const auto r = cohort_error_report("truth", Organ::Rectum, "validation", cohort,
                                     [&](const FeatureVector& f) {
                                       for (const auto& rec : cohort)
                                         if (rec.features == f) return rec.curve(Organ::Rectum);
                                       throw std::runtime_error("unknown");
                                     });
  for (const double v : r.band_avg) CHECK(v == 0.0);
  for (const double v : r.point_avg) CHECK(v == 0.0);
  const std::vector<ErrorReport> rows = {r};
  CHECK(report_csv(rows) ==
        "method,dataset,0-6420,0-1990,2000-3990,4000-6420,5300,5600,6000\n"
        "truth,validation,0.0,0.0,0.0,0.0,0.0,0.0,0.0\n");
}

TEST_CASE("Kruskal-Wallis edge cases") {
  const std::vector<std::vector<double>> tied = {{1, 1}, {1, 1}};
  const auto t = kruskal_wallis(tied);
  CHECK(t.h == 0.0);
  CHECK(t.p_value == 1.0);
  CHECK(t.df == 1);
  const std::vector<std::vector<double>> one = {{1, 2}};
  CHECK_THROWS_AS(kruskal_wallis(one), Error);
  // two clearly separated groups: small p
  const std::vector<std::vector<double>> sep = {{1, 2, 3, 4, 5}, {11, 12, 13, 14, 15}};
  CHECK(kruskal_wallis(sep).p_value < 0.01);
  CHECK(chi_square_sf(0.0, 3) == 1.0);
}

TEST_CASE("KW summary covers the listed doses") {
  const auto cohort = testing::small_cohort(6);
  std::vector<CumulativeDVH> a, p;
  for (const auto& r : cohort) {
    a.push_back(r.curve(Organ::Bladder));
    p.push_back(r.curve(Organ::Bladder));
  }
  const auto rows = kw_dose_summary("LR", Organ::Bladder, a, p);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].dose_cgy == 3000);
  CHECK(rows[7].dose_cgy == 6000);
  for (const auto& r : rows) CHECK(r.test.p_value == doctest::Approx(1.0));
  CHECK(kw_csv(rows).starts_with("method,organ,dose_cgy,h_statistic,p_value\nLR,bladder,3000,"));
}

TEST_CASE("select_best orders by full-band MAE then variance") {
  std::vector<ErrorReport> r(4);
  r[0].band_avg[0] = 2.0;
  r[1].band_avg[0] = 1.0, r[1].variance = 0.5;
  r[2].band_avg[0] = 1.0, r[2].variance = 0.1;
  r[3].band_avg[0] = 3.0;
  CHECK(select_best(r, 3) == std::vector<std::size_t>{2, 1, 0});
  CHECK_THROWS_AS(select_best(r, 5), Error);
}

TEST_CASE("split sizes") {
  const auto cohort = testing::small_cohort(94);
  const auto s = split_cohort(cohort, 0.7, 42);
  CHECK(s.train.size() == 65);
  CHECK(s.test.size() == 29);
  CHECK(split_cohort(testing::small_cohort(10), 0.7, 1).train.size() == 7);
  CHECK(split_cohort(testing::small_cohort(2), 0.01, 1).train.size() == 1);
  // same seed, same membership
  CHECK(split_cohort(cohort, 0.7, 42).test.front().case_id == s.test.front().case_id);
}

TEST_CASE("report json groups by organ") {
  std::vector<ErrorReport> r(2);
  r[0].method = "MLP", r[0].dataset = "test", r[0].organ = Organ::Bladder;
  r[1].method = "RF", r[1].dataset = "test", r[1].organ = Organ::Rectum;
  const auto j = report_json(r);
  CHECK(j.find("\"bladder\"") < j.find("\"rectum\""));
  CHECK(j.find("minimal stand-in") != std::string::npos);
}
