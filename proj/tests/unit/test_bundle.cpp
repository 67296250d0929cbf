#include "doctest.h"

#include <fstream>

#include "dvhkit/bundle.hpp"
#include "dvhkit/error.hpp"
#include "dvhkit/pipeline.hpp"
#include "helpers.hpp"

using namespace dvhkit;

namespace {

const ModelBundle& small_bundle() {
  static const ModelBundle b = [] {
    TrainOptions o;
    o.algorithms = {AlgorithmId::LR, AlgorithmId::DT, AlgorithmId::FRBP, AlgorithmId::MLP};
    o.overrides[AlgorithmId::MLP] = testing::fast_hp(AlgorithmId::MLP);
    const auto cohort = testing::small_cohort(16);
    auto out = cmd_train(cohort, o);
    out.bundle.created_at = "2026-01-01T00:00:00Z";
    return out.bundle;
  }();
  return b;
}

ErrorCode code_of(std::span<const std::uint8_t> bytes) {
  try {
    deserialize_bundle(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;  // not thrown
}

}  // namespace

TEST_CASE("bundle bytes round-trip exactly") {
  const auto& b = small_bundle();
  const auto bytes = serialize_bundle(b);
  const auto back = deserialize_bundle(bytes);
  CHECK(serialize_bundle(back) == bytes);
  CHECK(back.fingerprint == b.fingerprint);
  CHECK(back.models.size() == b.models.size());
  CHECK(back.ensembles == b.ensembles);
  const auto f = testing::small_cohort(3, 99)[2].features;
  for (const auto organ : {Organ::Bladder, Organ::Rectum}) {
    for (const auto id : b.algorithms(organ)) CHECK(back.predict(id, organ, f) == b.predict(id, organ, f));
  }
}

TEST_CASE("tampering is detected") {
  auto bytes = serialize_bundle(small_bundle());
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  CHECK(code_of(flipped) == ErrorCode::CorruptBundle);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(code_of(magic) == ErrorCode::CorruptBundle);
  auto version = bytes;
  version[8] = 2;  // little-endian u32 right after the magic
  CHECK(code_of(version) == ErrorCode::VersionMismatch);
  CHECK(code_of(std::span(bytes).first(10)) == ErrorCode::CorruptBundle);
}

TEST_CASE("save writes the bundle and a JSON sidecar") {
  testing::TempDir dir;
  const auto path = dir / "m.dvhb";
  save_bundle(path, small_bundle());
  CHECK(std::filesystem::exists(path.string() + ".json"));
  const auto back = load_bundle(path);
  CHECK(back.fingerprint == small_bundle().fingerprint);
  const auto side = bundle_sidecar_json(small_bundle());
  CHECK(side.find(small_bundle().fingerprint) != std::string::npos);
  CHECK(side.find("\"created_at\": \"2026-01-01T00:00:00Z\"") != std::string::npos);
  CHECK_THROWS_AS(load_bundle(dir / "missing.dvhb"), Error);
}

TEST_CASE("fingerprint ignores the timestamp and follows the models") {
  auto b = small_bundle();
  b.created_at = "2030-01-01T00:00:00Z";
  CHECK(bundle_fingerprint(b.models) == small_bundle().fingerprint);
  b.models.pop_back();
  CHECK(bundle_fingerprint(b.models) != small_bundle().fingerprint);
}

TEST_CASE("unknown model lookups") {
  const auto& b = small_bundle();
  CHECK(b.find(AlgorithmId::RF, Organ::Bladder) == nullptr);
  CHECK_THROWS_AS(b.predict(AlgorithmId::RF, Organ::Bladder, testing::small_cohort(1)[0].features), Error);
  const auto ids = b.algorithms(Organ::Rectum);
  CHECK(std::find(ids.begin(), ids.end(), AlgorithmId::Ensemble3) != ids.end());
  CHECK(std::find(ids.begin(), ids.end(), AlgorithmId::Ensemble6) == ids.end());  // only four models
}

TEST_CASE("single model round-trips") {
  for (const auto& m : small_bundle().models) {
    CAPTURE(to_string(m.algorithm));
    const auto bytes = serialize_model(m);
    CHECK(serialize_model(deserialize_model(bytes)) == bytes);
  }
}
