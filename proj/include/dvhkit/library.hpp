#pragma once

// JSON dose-volume library and small file helpers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvhkit/dvh.hpp"

namespace dvhkit {

/// Curve as {"start_cgy", "step_cgy", "values"}.
std::string curve_json(const CumulativeDVH& curve);

/// {"format": "dvhkit-library", "version": 1, "records": [...]}. Doubles are
/// written in shortest round-trip form, so reading back is bit-exact.
std::string library_json(std::span<const PatientRecord> records);
std::vector<PatientRecord> parse_library_json(std::string_view text);

/// case_id, source and the six features, one row per record.
std::string features_csv(std::span<const PatientRecord> records);

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> content);

std::vector<PatientRecord> load_library(const std::filesystem::path& path);
void save_library(const std::filesystem::path& path, std::span<const PatientRecord> records);

}  // namespace dvhkit
