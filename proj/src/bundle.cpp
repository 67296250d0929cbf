#include "dvhkit/bundle.hpp"

#include <algorithm>
#include <cstring>

#include "json.hpp"

#include "dvhkit/bytes.hpp"
#include "dvhkit/error.hpp"
#include "dvhkit/library.hpp"

namespace dvhkit {

namespace {

constexpr char kMagic[8] = {'D', 'V', 'H', 'K', 'I', 'T', 'B', '\0'};
constexpr std::size_t kDigestHexLen = 64;

enum class Section : std::uint8_t { Meta = 1, Model = 2, Ensemble = 3, Band = 4, Report = 5 };

enum class PredictorTag : std::uint8_t { Linear = 1, Tree = 2, Forest = 3, Boosted = 4, Mlp = 5, Fdt = 6 };

void put_tree(ByteWriter& w, const RegressionTree& t) {
  w.u64(t.nodes.size());
  for (const auto& n : t.nodes) {
    w.i32(n.feature);
    w.f64(n.threshold);
    w.i32(n.left);
    w.i32(n.right);
    w.f64(n.value);
  }
}

RegressionTree get_tree(ByteReader& r) {
  RegressionTree t;
  t.nodes.resize(r.count(28));
  const auto limit = static_cast<std::int32_t>(t.nodes.size());
  for (std::int32_t i = 0; i < limit; ++i) {
    auto& n = t.nodes[static_cast<std::size_t>(i)];
    n.feature = r.i32();
    n.threshold = r.f64();
    n.left = r.i32();
    n.right = r.i32();
    n.value = r.f64();
    if (n.feature >= 0 && (n.left <= i || n.right <= i || n.left >= limit || n.right >= limit)) {
      throw Error(ErrorCode::CorruptBundle, "tree child index out of range");
    }
  }
  if (t.nodes.empty()) throw Error(ErrorCode::CorruptBundle, "empty tree");
  return t;
}

std::vector<RegressionTree> get_trees(ByteReader& r) {
  std::vector<RegressionTree> trees(r.count(8));
  for (auto& t : trees) t = get_tree(r);
  return trees;
}

struct PutPredictor {
  ByteWriter& w;
  void operator()(const LinearModel& m) const {
    w.u8(static_cast<std::uint8_t>(PredictorTag::Linear));
    w.f64s(m.weights);
    w.f64(m.intercept);
  }
  void operator()(const RegressionTree& m) const {
    w.u8(static_cast<std::uint8_t>(PredictorTag::Tree));
    put_tree(w, m);
  }
  void operator()(const RandomForest& m) const {
    w.u8(static_cast<std::uint8_t>(PredictorTag::Forest));
    w.u64(m.trees.size());
    for (const auto& t : m.trees) put_tree(w, t);
  }
  void operator()(const BoostedTrees& m) const {
    w.u8(static_cast<std::uint8_t>(PredictorTag::Boosted));
    w.f64(m.base);
    w.f64(m.learning_rate);
    w.u64(m.stages.size());
    for (const auto& t : m.stages) put_tree(w, t);
  }
  void operator()(const Mlp& m) const {
    w.u8(static_cast<std::uint8_t>(PredictorTag::Mlp));
    w.f64(m.y_mean);
    w.f64(m.y_scale);
    w.u64(m.layers.size());
    for (const auto& l : m.layers) {
      w.u64(l.n_in);
      w.u64(l.n_out);
      w.f64s(l.weights);
      w.f64s(l.bias);
    }
  }
  void operator()(const FuzzyDecisionTree& m) const {
    w.u8(static_cast<std::uint8_t>(PredictorTag::Fdt));
    w.u64(m.nodes.size());
    for (const auto& n : m.nodes) {
      w.i32(n.attribute);
      w.u32(n.first_child);
      w.u32(n.n_children);
      w.f64(n.value);
    }
    w.u64(m.attribute_order.size());
    for (const auto a : m.attribute_order) w.u64(a);
    w.f64s(m.root_gains);
  }
};

BinPredictor get_predictor(ByteReader& r, std::size_t n_features) {
  const auto tag = static_cast<PredictorTag>(r.u8());
  switch (tag) {
    case PredictorTag::Linear: {
      LinearModel m;
      m.weights = r.f64s();
      m.intercept = r.f64();
      if (m.weights.size() != n_features) throw Error(ErrorCode::CorruptBundle, "linear weight count");
      return m;
    }
    case PredictorTag::Tree: return get_tree(r);
    case PredictorTag::Forest: return RandomForest{get_trees(r)};
    case PredictorTag::Boosted: {
      BoostedTrees m;
      m.base = r.f64();
      m.learning_rate = r.f64();
      m.stages = get_trees(r);
      return m;
    }
    case PredictorTag::Mlp: {
      Mlp m;
      m.y_mean = r.f64();
      m.y_scale = r.f64();
      m.layers.resize(r.count(16));
      std::size_t expect_in = n_features;
      for (auto& l : m.layers) {
        l.n_in = r.u64();
        l.n_out = r.u64();
        l.weights = r.f64s();
        l.bias = r.f64s();
        if (l.n_in != expect_in || l.weights.size() != l.n_in * l.n_out || l.bias.size() != l.n_out) {
          throw Error(ErrorCode::CorruptBundle, "MLP layer shape");
        }
        expect_in = l.n_out;
      }
      if (m.layers.empty() || expect_in != 1) throw Error(ErrorCode::CorruptBundle, "MLP output shape");
      return m;
    }
    case PredictorTag::Fdt: {
      FuzzyDecisionTree m;
      m.nodes.resize(r.count(20));
      for (std::size_t i = 0; i < m.nodes.size(); ++i) {
        auto& n = m.nodes[i];
        n.attribute = r.i32();
        n.first_child = r.u32();
        n.n_children = r.u32();
        n.value = r.f64();
        // Children always follow their parent, which also rules out cycles.
        if (n.attribute >= static_cast<std::int32_t>(n_features) ||
            (n.attribute >= 0 && (n.first_child <= i ||
                                  static_cast<std::size_t>(n.first_child) + n.n_children > m.nodes.size()))) {
          throw Error(ErrorCode::CorruptBundle, "fuzzy tree node out of range");
        }
      }
      if (m.nodes.empty()) throw Error(ErrorCode::CorruptBundle, "empty fuzzy tree");
      m.attribute_order.resize(r.count(8));
      for (auto& a : m.attribute_order) a = r.u64();
      m.root_gains = r.f64s();
      return m;
    }
  }
  throw Error(ErrorCode::CorruptBundle, "unknown predictor tag");
}

void put_grid(ByteWriter& w, const DoseGrid& g) {
  w.f64(g.start_cgy);
  w.f64(g.step_cgy);
  w.u64(g.n_bins);
}

DoseGrid get_grid(ByteReader& r) {
  DoseGrid g;
  g.start_cgy = r.f64();
  g.step_cgy = r.f64();
  g.n_bins = r.u64();
  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptBundle, e.message());
  }
  if (g.n_bins > 1'000'000) throw Error(ErrorCode::CorruptBundle, "implausible grid size");
  return g;
}

AlgorithmId get_algorithm(ByteReader& r) {
  const auto v = r.u8();
  if (v >= kAlgorithms.size()) throw Error(ErrorCode::CorruptBundle, "unknown algorithm id");
  return kAlgorithms[v];
}

Organ get_organ(ByteReader& r) {
  const auto v = r.u8();
  if (v >= kOrgans.size()) throw Error(ErrorCode::CorruptBundle, "unknown organ id");
  return kOrgans[v];
}

void put_report(ByteWriter& w, const ErrorReport& rep) {
  w.str(rep.method);
  w.u8(static_cast<std::uint8_t>(rep.organ));
  w.str(rep.dataset);
  w.f64s(rep.band_avg);
  w.f64s(rep.point_avg);
  w.f64(rep.variance);
  w.u64(rep.patients.size());
}

ErrorReport get_report(ByteReader& r) {
  ErrorReport rep;
  rep.method = r.str();
  rep.organ = get_organ(r);
  rep.dataset = r.str();
  const auto band = r.f64s();
  const auto point = r.f64s();
  if (band.size() != rep.band_avg.size() || point.size() != rep.point_avg.size()) {
    throw Error(ErrorCode::CorruptBundle, "report column count");
  }
  std::copy(band.begin(), band.end(), rep.band_avg.begin());
  std::copy(point.begin(), point.end(), rep.point_avg.begin());
  rep.variance = r.f64();
  // Per-patient rows are not stored; keep the count as empty placeholders.
  const auto n = r.count(0);
  if (n > 10'000'000) throw Error(ErrorCode::CorruptBundle, "implausible patient count");
  rep.patients.resize(n);
  return rep;
}

std::vector<std::uint8_t> section(Section kind, std::span<const std::uint8_t> payload) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(payload.size());
  w.raw(payload);
  return w.take();
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const TrainedDvhModel& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(m.algorithm));
  w.u8(static_cast<std::uint8_t>(m.organ));
  put_grid(w, m.grid);
  w.f64s(m.standardizer.mean);
  w.f64s(m.standardizer.stddev);
  w.u64(m.hyperparams.size());
  for (const auto& [k, v] : m.hyperparams) {
    w.str(k);
    w.f64(v);
  }
  w.u64(m.seed);
  w.str(m.fingerprint);
  w.u64(m.partitions.size());
  for (const auto& p : m.partitions) {
    w.u64(p.feature_index);
    w.f64(p.within_std);
    w.f64(p.domain_lo);
    w.f64(p.domain_hi);
    w.u64(p.sets.size());
    for (const auto& s : p.sets) {
      w.str(s.label);
      w.u8(static_cast<std::uint8_t>(s.shape));
      w.f64(s.a);
      w.f64(s.b);
      w.f64(s.c);
      w.f64(s.d);
    }
  }
  w.u64(m.per_bin.size());
  for (const auto& p : m.per_bin) std::visit(PutPredictor{w}, p);
  return w.take();
}

TrainedDvhModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  TrainedDvhModel m;
  m.algorithm = get_algorithm(r);
  if (is_ensemble(m.algorithm)) throw Error(ErrorCode::CorruptBundle, "ensemble stored as a model");
  m.organ = get_organ(r);
  m.grid = get_grid(r);
  m.standardizer.mean = r.f64s();
  m.standardizer.stddev = r.f64s();
  const auto p = m.standardizer.mean.size();
  if (p != kNumFeatures || m.standardizer.stddev.size() != p) {
    throw Error(ErrorCode::CorruptBundle, "standardizer size");
  }
  const auto n_hp = r.count(16);
  for (std::size_t i = 0; i < n_hp; ++i) {
    auto k = r.str();
    m.hyperparams[k] = r.f64();
  }
  m.seed = r.u64();
  m.fingerprint = r.str();
  m.partitions.resize(r.count(40));
  for (auto& part : m.partitions) {
    part.feature_index = r.u64();
    part.within_std = r.f64();
    part.domain_lo = r.f64();
    part.domain_hi = r.f64();
    part.sets.resize(r.count(41));
    for (auto& s : part.sets) {
      s.label = r.str();
      const auto shape = r.u8();
      if (shape > static_cast<std::uint8_t>(FuzzyShape::RightShoulder)) {
        throw Error(ErrorCode::CorruptBundle, "unknown fuzzy shape");
      }
      s.shape = static_cast<FuzzyShape>(shape);
      s.a = r.f64();
      s.b = r.f64();
      s.c = r.f64();
      s.d = r.f64();
    }
  }
  if (m.algorithm == AlgorithmId::FRBP && m.partitions.size() != kNumFeatures) {
    throw Error(ErrorCode::CorruptBundle, "FRBP model without one partition per feature");
  }
  const auto n_bins = r.count(1);
  if (n_bins != m.grid.n_bins) throw Error(ErrorCode::CorruptBundle, "per-bin model count differs from grid");
  m.per_bin.reserve(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) m.per_bin.push_back(get_predictor(r, p));
  for (const auto& pb : m.per_bin) {
    if (const auto* fdt = std::get_if<FuzzyDecisionTree>(&pb)) {
      for (const auto& n : fdt->nodes) {
        if (n.attribute >= 0 && n.n_children != m.partitions[static_cast<std::size_t>(n.attribute)].sets.size()) {
          throw Error(ErrorCode::CorruptBundle, "fuzzy tree child count differs from partition");
        }
      }
    }
  }
  if (!r.done()) throw Error(ErrorCode::CorruptBundle, "trailing bytes in model section");
  return m;
}

std::string bundle_fingerprint(std::span<const TrainedDvhModel> models) {
  ByteWriter w;
  for (const auto& m : models) {
    const auto bytes = serialize_model(m);
    w.u64(bytes.size());
    w.raw(bytes);
  }
  return sha256_hex(w.bytes());
}

const TrainedDvhModel* ModelBundle::find(AlgorithmId algorithm, Organ organ) const noexcept {
  for (const auto& m : models) {
    if (m.algorithm == algorithm && m.organ == organ) return &m;
  }
  return nullptr;
}

std::vector<AlgorithmId> ModelBundle::algorithms(Organ organ) const {
  std::vector<AlgorithmId> out;
  for (const auto id : kAlgorithms) {
    if (find(id, organ) != nullptr || ensembles.contains({id, organ})) out.push_back(id);
  }
  return out;
}

CumulativeDVH ModelBundle::predict(AlgorithmId algorithm, Organ organ, const FeatureVector& features) const {
  if (const auto* m = find(algorithm, organ)) return predict_dvh(*m, features);
  const auto it = ensembles.find({algorithm, organ});
  if (it == ensembles.end()) {
    throw Error(ErrorCode::UnknownAlgorithm, std::string(to_string(algorithm)) + " is not in the bundle for " +
                                                 std::string(to_string(organ)));
  }
  std::vector<const TrainedDvhModel*> members;
  for (const auto id : it->second) {
    const auto* m = find(id, organ);
    if (m == nullptr) throw Error(ErrorCode::CorruptBundle, "ensemble member missing from bundle");
    members.push_back(m);
  }
  return ensemble_predict(members, features);
}

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& b) {
  std::vector<std::vector<std::uint8_t>> sections;
  {
    ByteWriter w;
    w.str(b.created_at);
    w.u64(b.seed);
    w.str(bundle_fingerprint(b.models));
    sections.push_back(section(Section::Meta, w.bytes()));
  }
  for (const auto& m : b.models) sections.push_back(section(Section::Model, serialize_model(m)));
  for (const auto& [key, members] : b.ensembles) {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(key.first));
    w.u8(static_cast<std::uint8_t>(key.second));
    w.u64(members.size());
    for (const auto id : members) w.u8(static_cast<std::uint8_t>(id));
    sections.push_back(section(Section::Ensemble, w.bytes()));
  }
  for (const auto& [organ, band] : b.bands) {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(organ));
    put_grid(w, band.grid);
    w.f64s(band.lower);
    w.f64s(band.upper);
    for (const auto s : band.fit_status) w.u8(static_cast<std::uint8_t>(s));
    sections.push_back(section(Section::Band, w.bytes()));
  }
  for (const auto& rep : b.test_reports) {
    ByteWriter w;
    put_report(w, rep);
    sections.push_back(section(Section::Report, w.bytes()));
  }

  ByteWriter out;
  out.raw({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof kMagic});
  out.u32(b.format_version);
  out.u64(sections.size());
  for (const auto& s : sections) out.raw(s);
  const auto digest = sha256_hex(out.bytes());
  out.raw({reinterpret_cast<const std::uint8_t*>(digest.data()), digest.size()});
  return out.take();
}

ModelBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 12 + kDigestHexLen || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::CorruptBundle, "not a dvhkit bundle");
  }
  const auto body = bytes.first(bytes.size() - kDigestHexLen);
  const std::string stored(reinterpret_cast<const char*>(bytes.data() + body.size()), kDigestHexLen);
  ByteReader r(body.subspan(sizeof kMagic));
  ModelBundle b;
  b.format_version = r.u32();
  if (b.format_version != kBundleVersion) {
    throw Error(ErrorCode::VersionMismatch, "bundle version " + std::to_string(b.format_version) +
                                                ", this build reads version " + std::to_string(kBundleVersion));
  }
  if (sha256_hex(body) != stored) throw Error(ErrorCode::CorruptBundle, "bundle digest mismatch");

  const auto n_sections = r.count(9);
  std::string stored_fingerprint;
  bool have_meta = false;
  for (std::size_t s = 0; s < n_sections; ++s) {
    const auto kind = static_cast<Section>(r.u8());
    const auto len = r.u64();
    if (len > r.remaining()) throw Error(ErrorCode::CorruptBundle, "section overruns the bundle");
    ByteReader sr(r.raw(static_cast<std::size_t>(len)));
    switch (kind) {
      case Section::Meta:
        b.created_at = sr.str();
        b.seed = sr.u64();
        stored_fingerprint = sr.str();
        have_meta = true;
        break;
      case Section::Model: {
        auto m = deserialize_model(sr.raw(sr.remaining()));
        if (b.find(m.algorithm, m.organ) != nullptr) throw Error(ErrorCode::CorruptBundle, "duplicate model");
        b.models.push_back(std::move(m));
        break;
      }
      case Section::Ensemble: {
        const auto id = get_algorithm(sr);
        const auto organ = get_organ(sr);
        std::vector<AlgorithmId> members(sr.count(1));
        for (auto& m : members) m = get_algorithm(sr);
        b.ensembles[{id, organ}] = std::move(members);
        break;
      }
      case Section::Band: {
        const auto organ = get_organ(sr);
        ConfidenceBand band;
        band.grid = get_grid(sr);
        band.lower = sr.f64s();
        band.upper = sr.f64s();
        if (band.lower.size() != band.grid.n_bins || band.upper.size() != band.grid.n_bins) {
          throw Error(ErrorCode::CorruptBundle, "band length");
        }
        for (std::size_t i = 0; i < band.grid.n_bins; ++i) {
          const auto st = sr.u8();
          if (st > 1) throw Error(ErrorCode::CorruptBundle, "band status");
          band.fit_status.push_back(static_cast<FitStatus>(st));
        }
        b.bands[organ] = std::move(band);
        break;
      }
      case Section::Report: b.test_reports.push_back(get_report(sr)); break;
      default: throw Error(ErrorCode::CorruptBundle, "unknown section kind");
    }
    if (!sr.done()) throw Error(ErrorCode::CorruptBundle, "trailing bytes in section");
  }
  if (!r.done()) throw Error(ErrorCode::CorruptBundle, "trailing bytes after sections");
  if (!have_meta) throw Error(ErrorCode::CorruptBundle, "bundle has no metadata section");
  b.fingerprint = bundle_fingerprint(b.models);
  if (b.fingerprint != stored_fingerprint) throw Error(ErrorCode::CorruptBundle, "model fingerprint mismatch");
  for (const auto& [key, members] : b.ensembles) {
    for (const auto id : members) {
      if (b.find(id, key.second) == nullptr) throw Error(ErrorCode::CorruptBundle, "ensemble member missing");
    }
  }
  return b;
}

std::string bundle_sidecar_json(const ModelBundle& b) {
  nlohmann::ordered_json j;
  j["format"] = "dvhkit-bundle";
  j["format_version"] = b.format_version;
  j["created_at"] = b.created_at;
  j["seed"] = b.seed;
  j["fingerprint"] = bundle_fingerprint(b.models);
  auto models = nlohmann::ordered_json::array();
  for (const auto& m : b.models) {
    nlohmann::ordered_json jm;
    jm["algorithm"] = std::string(to_string(m.algorithm));
    jm["organ"] = std::string(to_string(m.organ));
    jm["n_bins"] = m.grid.n_bins;
    jm["start_cgy"] = m.grid.start_cgy;
    jm["step_cgy"] = m.grid.step_cgy;
    jm["hyperparams"] = m.hyperparams;
    jm["training_fingerprint"] = m.fingerprint;
    jm["standardizer"] = {{"mean", m.standardizer.mean}, {"stddev", m.standardizer.stddev}};
    models.push_back(std::move(jm));
  }
  j["models"] = std::move(models);
  auto ens = nlohmann::ordered_json::array();
  for (const auto& [key, members] : b.ensembles) {
    std::vector<std::string> names;
    for (const auto id : members) names.emplace_back(to_string(id));
    ens.push_back({{"algorithm", std::string(to_string(key.first))},
                   {"organ", std::string(to_string(key.second))},
                   {"members", names}});
  }
  j["ensembles"] = std::move(ens);
  std::vector<std::string> bands;
  for (const auto& [organ, band] : b.bands) bands.emplace_back(to_string(organ));
  j["bands"] = bands;
  return j.dump(2) + "\n";
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
  write_binary_file(path, serialize_bundle(bundle));
  write_text_file(path.string() + ".json", bundle_sidecar_json(bundle));
}

ModelBundle load_bundle(const std::filesystem::path& path) { return deserialize_bundle(read_binary_file(path)); }

}  // namespace dvhkit
