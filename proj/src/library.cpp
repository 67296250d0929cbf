#include "dvhkit/library.hpp"

#include <fstream>
#include <iterator>

#include "json.hpp"

#include "dvhkit/error.hpp"
#include "dvhkit/text.hpp"

namespace dvhkit {

namespace {

using json = nlohmann::ordered_json;

json curve_to_json(const CumulativeDVH& c) {
  json j;
  j["start_cgy"] = c.grid().start_cgy;
  j["step_cgy"] = c.grid().step_cgy;
  j["values"] = std::vector<double>(c.values().begin(), c.values().end());
  return j;
}

CumulativeDVH curve_from_json(const json& j) {
  DoseGrid grid;
  grid.start_cgy = j.at("start_cgy").get<double>();
  grid.step_cgy = j.at("step_cgy").get<double>();
  auto values = j.at("values").get<std::vector<double>>();
  grid.n_bins = values.size();
  grid.validate();
  return CumulativeDVH(grid, std::move(values));
}

}  // namespace

std::string curve_json(const CumulativeDVH& curve) { return curve_to_json(curve).dump(); }

std::string library_json(std::span<const PatientRecord> records) {
  json root;
  root["format"] = "dvhkit-library";
  root["version"] = 1;
  auto arr = json::array();
  for (const auto& r : records) {
    json jr;
    jr["case_id"] = r.case_id;
    jr["source"] = std::string(to_string(r.source));
    json f;
    const auto values = r.features.as_array();
    for (std::size_t i = 0; i < kNumFeatures; ++i) f[std::string(FeatureVector::kNames[i])] = values[i];
    jr["features"] = f;
    json dvh;
    for (const auto& [organ, curve] : r.dvh) dvh[std::string(to_string(organ))] = curve_to_json(curve);
    jr["dvh"] = dvh;
    arr.push_back(std::move(jr));
  }
  root["records"] = std::move(arr);
  return root.dump(1) + "\n";
}

std::vector<PatientRecord> parse_library_json(std::string_view text) {
  try {
    const auto root = json::parse(text);
    if (root.at("format").get<std::string>() != "dvhkit-library") {
      throw Error(ErrorCode::MalformedHeader, "not a dvhkit library");
    }
    if (root.at("version").get<int>() != 1) throw Error(ErrorCode::VersionMismatch, "unsupported library version");
    std::vector<PatientRecord> out;
    for (const auto& jr : root.at("records")) {
      PatientRecord r;
      r.case_id = jr.at("case_id").get<std::string>();
      r.source = parse_source_kind(jr.at("source").get<std::string>());
      std::array<double, kNumFeatures> f{};
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        f[i] = jr.at("features").at(std::string(FeatureVector::kNames[i])).get<double>();
      }
      r.features = FeatureVector::from_array(f);
      for (const auto& [name, curve] : jr.at("dvh").items()) r.dvh.emplace(parse_organ(name), curve_from_json(curve));
      r.validate();
      out.push_back(std::move(r));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("library JSON: ") + e.what());
  }
}

std::string features_csv(std::span<const PatientRecord> records) {
  std::string out = "case_id,source";
  for (const auto name : FeatureVector::kNames) out += "," + std::string(name);
  out += "\n";
  for (const auto& r : records) {
    out += r.case_id + "," + std::string(to_string(r.source));
    for (const double v : r.features.as_array()) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  return {text.begin(), text.end()};
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> content) {
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(content.data()), content.size()));
}

std::vector<PatientRecord> load_library(const std::filesystem::path& path) {
  return parse_library_json(read_text_file(path));
}

void save_library(const std::filesystem::path& path, std::span<const PatientRecord> records) {
  write_text_file(path, library_json(records));
}

}  // namespace dvhkit
