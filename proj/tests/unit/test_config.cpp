#include "doctest.h"

#include "dvhkit/config.hpp"
#include "dvhkit/error.hpp"
#include "helpers.hpp"

using namespace dvhkit;

namespace {

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("key = value parsing") {
  const auto c = Config::parse("# comment\nseed = 7\n\n  split.ratio=0.6  # trailing\ntrain.tune = yes\n");
  CHECK(c.get_int("seed", 0) == 7);
  CHECK(c.get_double("split.ratio", 0) == 0.6);
  CHECK(c.get_bool("train.tune", false));
  CHECK(c.get_string("nope", "x") == "x");
  CHECK_NOTHROW(c.check_known_keys());
}

TEST_CASE("duplicate, malformed and unknown keys") {
  CHECK(message_of([] { Config::parse("seed = 1\nseed = 2\n"); }).find("line 2: duplicate key 'seed'") !=
        std::string::npos);
  CHECK(message_of([] { Config::parse("seed 1\n"); }).find("line 1") != std::string::npos);
  CHECK(message_of([] { Config::parse("sede = 1\n").check_known_keys(); }).find("'sede'") != std::string::npos);
  CHECK_THROWS_AS(Config::parse("seed = x").get_int("seed", 0), Error);
  CHECK_THROWS_AS(Config::parse("seed = 1.5").get_int("seed", 0), Error);
  CHECK_THROWS_AS(Config::parse("train.tune = maybe").get_bool("train.tune", false), Error);
}

TEST_CASE("lists and prefixes") {
  const auto c = Config::parse("train.algorithms = LR, , RF ,FRBP\nhp.RF.n_trees = 20\nhp.RF.max_depth = 4\n");
  CHECK(c.get_list("train.algorithms") == std::vector<std::string>{"LR", "RF", "FRBP"});
  const auto hp = hyperparams_from_config(c, AlgorithmId::RF);
  CHECK(hp.at("n_trees") == 20);
  CHECK(hp.at("max_depth") == 4);
  CHECK(hyperparams_from_config(c, AlgorithmId::LR).empty());
  CHECK_THROWS_AS(hyperparams_from_config(Config::parse("hp.RF.n_tres = 3"), AlgorithmId::RF), Error);
}

TEST_CASE("structure names and synth settings") {
  const auto rules = structure_rules_from_config(Config::parse("structures.bladder = Blase, BL*\n"));
  CHECK(rules.for_target(TargetStructure::Bladder) == std::vector<std::string>{"Blase", "BL*"});
  const auto sc = synth_config_from_config(Config::parse("seed = 3\nsynth.n_patients = 5\nsynth.range.ptv60_cc = 10, 20\n"));
  CHECK(sc.seed == 3);
  CHECK(sc.n_patients == 5);
  CHECK(sc.ranges[0] == std::pair{10.0, 20.0});
  CHECK_THROWS_AS(synth_config_from_config(Config::parse("synth.range.ptv60_cc = 10\n")), Error);
  CHECK_THROWS_AS(synth_config_from_config(Config::parse("synth.n_patients = 0\n")), Error);
}

TEST_CASE("constraints parse, validate and flag") {
  const auto set = ConstraintSet::from_config(Config::parse("constraint.bladder = 5000:50, 6000:5\nconstraint.rectum = 6000:35\n"));
  REQUIRE(set.per_organ.at(Organ::Bladder).size() == 2);
  CHECK(set.per_organ.at(Organ::Bladder)[1].max_volume_pct == 5);
  CHECK_NOTHROW(set.validate(DoseGrid::canonical()));
  CHECK_THROWS_AS(ConstraintSet::from_config(Config::parse("constraint.bladder = 5000-50\n")), Error);
  CHECK_THROWS_AS(ConstraintSet::from_config(Config::parse("constraint.liver = 5000:50\n")), Error);
  ConstraintSet far;
  far.per_organ[Organ::Rectum] = {{9000, 10}};
  CHECK_THROWS_AS(far.validate(DoseGrid::canonical()), Error);

  // flat 4 % curve against V60 <= 5 %: passes; against <= 3 %: fails
  const CumulativeDVH flat(DoseGrid::canonical(), std::vector<double>(642, 4.0));
  const std::vector<Constraint> c = {{6000, 5}, {6000, 3}};
  const auto flags = check_constraints(flat, c);
  CHECK(flags[0].predicted_pct == doctest::Approx(4.0));
  CHECK(flags[0].pass);
  CHECK_FALSE(flags[1].pass);
}
