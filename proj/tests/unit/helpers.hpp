#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dvhkit/dvh.hpp"
#include "dvhkit/regressors.hpp"
#include "dvhkit/synth.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(DVHKIT_FIXTURES) / name;
}

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dvhkit-unit-" + std::to_string(std::random_device{}()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<dvhkit::PatientRecord> small_cohort(std::size_t n = 24, std::uint64_t seed = 42,
                                                       double noise = 0.0) {
  dvhkit::SynthConfig sc;
  sc.seed = seed;
  sc.n_patients = n;
  sc.noise_std = noise;
  return dvhkit::synth_cohort(sc);
}

/// Cheap settings so whole-curve fits stay fast in unit tests.
inline dvhkit::Hyperparams fast_hp(dvhkit::AlgorithmId id) {
  using dvhkit::AlgorithmId;
  switch (id) {
    case AlgorithmId::RF: return {{"n_trees", 5}, {"max_depth", 3}};
    case AlgorithmId::GBR: return {{"n_stages", 10}};
    case AlgorithmId::MLP: return {{"epochs", 40}, {"hidden1", 4}};
    default: return {};
  }
}

}  // namespace testing
