#include "doctest.h"

#include <cmath>

#include "dvhkit/error.hpp"
#include "dvhkit/synth.hpp"
#include "helpers.hpp"

using namespace dvhkit;

TEST_CASE("same seed, same cohort") {
  const auto a = testing::small_cohort(10, 5, 1.0);
  const auto b = testing::small_cohort(10, 5, 1.0);
  const auto c = testing::small_cohort(10, 6, 1.0);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].case_id == b[i].case_id);
    CHECK(a[i].features == b[i].features);
    CHECK(a[i].curve(Organ::Rectum) == b[i].curve(Organ::Rectum));
  }
  CHECK_FALSE(a[0].features == c[0].features);
  CHECK(a[0].case_id == "SYN-0001");
}

TEST_CASE("features stay inside the configured ranges") {
  SynthConfig sc;
  sc.n_patients = 200;
  const auto cohort = synth_cohort(sc);
  for (const auto& r : cohort) {
    const auto v = r.features.as_array();
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      CHECK(v[f] >= sc.ranges[f].first);
      CHECK(v[f] <= sc.ranges[f].second);
    }
  }
}

TEST_CASE("noisy curves are still monotone and bounded") {
  for (const auto& r : testing::small_cohort(20, 9, 3.0)) {
    for (const auto organ : {Organ::Bladder, Organ::Rectum}) {
      const auto& c = r.curve(organ);
      CHECK(c.size() == 642);
      for (std::size_t b = 0; b < c.size(); ++b) {
        CHECK(c[b] >= 0.0);
        CHECK(c[b] <= 100.0);
        if (b > 0) CHECK(c[b] <= c[b - 1]);
      }
    }
  }
}

TEST_CASE("zero noise reproduces the logistic truth") {
  SynthConfig sc;
  sc.n_patients = 3;
  sc.noise_std = 0.0;
  const auto cohort = synth_cohort(sc);
  const auto& r = cohort[1];
  const auto truth = synth_truth(sc, r.features.bladder_cc, r.features.bladder_overlap_frac);
  for (std::size_t b = 0; b < truth.size(); ++b) CHECK(r.curve(Organ::Bladder)[b] == doctest::Approx(truth[b]));
  // hand check of one bin
  const double d = sc.grid.dose(100);
  const double d50 = sc.d50_base + sc.d50_per_overlap * r.features.bladder_overlap_frac;
  const double w = sc.width_base + sc.width_per_cc * r.features.bladder_cc;
  CHECK(truth[100] == doctest::Approx(100.0 / (1.0 + std::exp((d - d50) / w))));
}

TEST_CASE("synth config validation") {
  SynthConfig sc;
  sc.n_patients = 0;
  CHECK_THROWS_AS(sc.validate(), Error);
  sc = {};
  sc.noise_std = -1;
  CHECK_THROWS_AS(sc.validate(), Error);
  sc = {};
  sc.ranges[4] = {0.5, 0.2};
  CHECK_THROWS_AS(sc.validate(), Error);
  sc = {};
  sc.ranges[3] = {0.0, 10.0};  // organ volume must stay positive
  CHECK_THROWS_AS(sc.validate(), Error);
  CHECK_NOTHROW(SynthConfig{}.validate());
}

TEST_CASE("export blocks start at dose zero") {
  const auto r = testing::small_cohort(1)[0];
  const auto blocks = synth_export_blocks(r);
  REQUIRE(blocks.size() == 6);
  for (const auto& b : blocks) {
    CHECK(b.doses_cgy.front() == 0.0);
    CHECK(b.values.front() == 100.0);
    CHECK(b.doses_cgy.size() == 643);
  }
  const auto cc = synth_export_blocks(r, VolumeUnit::CC);
  CHECK(cc[2].unit == VolumeUnit::CC);
  CHECK(cc[2].values.front() == r.features.bladder_cc);
  CHECK(cc[0].unit == VolumeUnit::Percent);
}
