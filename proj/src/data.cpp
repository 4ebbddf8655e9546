#include "conxgnn/data.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace conxgnn {

using nlohmann::json;

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::text: return "t";
    case Modality::audio: return "a";
    case Modality::visual: return "v";
  }
  return "?";
}

const Vector& Utterance::features(Modality m) const {
  switch (m) {
    case Modality::text: return text_feat;
    case Modality::audio: return audio_feat;
    case Modality::visual: return visual_feat;
  }
  throw std::invalid_argument("unknown modality");
}

bool Utterance::operator==(const Utterance& o) const {
  auto same = [](const Vector& a, const Vector& b) { return a.size() == b.size() && a == b; };
  return speaker_id == o.speaker_id && label == o.label && same(text_feat, o.text_feat) &&
         same(audio_feat, o.audio_feat) && same(visual_feat, o.visual_feat);
}

std::size_t FeatureDims::operator[](Modality m) const {
  switch (m) {
    case Modality::text: return text;
    case Modality::audio: return audio;
    case Modality::visual: return visual;
  }
  throw std::invalid_argument("unknown modality");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::unspecified: return "unspecified";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unspecified";
}

namespace {

Split parse_split(const std::string& s, std::size_t line) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "unspecified") return Split::unspecified;
  throw DataError(DataError::Kind::invalid_value, line, "unknown split '" + s + "'");
}

std::string at_line(std::size_t line) {
  return line == 0 ? std::string() : "line " + std::to_string(line) + ": ";
}

}  // namespace

DataError::DataError(Kind kind, std::size_t line, const std::string& what)
    : std::runtime_error(at_line(line) + what), kind_(kind), line_(line) {}

std::size_t Dataset::total_utterances() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.size();
  return n;
}

namespace {

void validate_conversation(const Dataset& ds, const Conversation& conv, std::size_t line) {
  using K = DataError::Kind;
  if (conv.utterances.empty()) {
    throw DataError(K::invalid_value, line, "conversation '" + conv.id + "' has no utterances");
  }
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const Utterance& u = conv.utterances[i];
    const std::string where = "conversation '" + conv.id + "' utterance " + std::to_string(i) + ": ";
    if (u.label >= ds.num_classes) {
      throw DataError(K::invalid_value, line,
                      where + "field 'label' = " + std::to_string(u.label) +
                          " out of range [0, " + std::to_string(ds.num_classes) + ")");
    }
    if (u.speaker_id >= ds.num_speakers) {
      throw DataError(K::invalid_value, line,
                      where + "field 'speaker_id' = " + std::to_string(u.speaker_id) +
                          " out of range [0, " + std::to_string(ds.num_speakers) + ")");
    }
    const std::pair<const char*, Modality> fields[] = {
        {"text_feat", Modality::text}, {"audio_feat", Modality::audio}, {"visual_feat", Modality::visual}};
    for (const auto& [name, m] : fields) {
      const Vector& f = u.features(m);
      if (static_cast<std::size_t>(f.size()) != ds.dims[m]) {
        throw DataError(K::invalid_value, line,
                        where + "dimension mismatch in '" + name + "': expected " +
                            std::to_string(ds.dims[m]) + ", got " + std::to_string(f.size()));
      }
      if (!f.allFinite()) {
        throw DataError(K::invalid_value, line, where + "non-finite value in '" + name + "'");
      }
    }
  }
}

}  // namespace

void Dataset::validate() const {
  using K = DataError::Kind;
  if (num_classes == 0) throw DataError(K::invalid_value, 0, "num_classes must be positive");
  if (num_speakers == 0) throw DataError(K::invalid_value, 0, "num_speakers must be positive");
  if (dims.text == 0 || dims.audio == 0 || dims.visual == 0) {
    throw DataError(K::invalid_value, 0, "feature dimensions must be positive");
  }
  for (const auto& c : conversations) validate_conversation(*this, c, 0);
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

template <typename T>
T require_field(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) {
    throw DataError(DataError::Kind::malformed_json, line, std::string("missing field '") + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::malformed_json, line,
                    std::string("field '") + key + "' has the wrong type: " + e.what());
  }
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json parse_line(const std::string& text, std::size_t line) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) {
      throw DataError(DataError::Kind::malformed_json, line, "expected a JSON object");
    }
    return j;
  } catch (const json::parse_error& e) {
    throw DataError(DataError::Kind::malformed_json, line, std::string("malformed JSON: ") + e.what());
  }
}

Conversation parse_conversation(const json& j, std::size_t line) {
  Conversation conv;
  conv.id = require_field<std::string>(j, "id", line);
  if (!j.contains("utterances") || !j.at("utterances").is_array()) {
    throw DataError(DataError::Kind::malformed_json, line, "missing array field 'utterances'");
  }
  for (const json& ju : j.at("utterances")) {
    if (!ju.is_object()) {
      throw DataError(DataError::Kind::malformed_json, line, "utterance is not an object");
    }
    Utterance u;
    const auto speaker = require_field<std::int64_t>(ju, "speaker_id", line);
    const auto label = require_field<std::int64_t>(ju, "label", line);
    if (speaker < 0) throw DataError(DataError::Kind::invalid_value, line, "field 'speaker_id' is negative");
    if (label < 0) throw DataError(DataError::Kind::invalid_value, line, "field 'label' is negative");
    u.speaker_id = static_cast<std::size_t>(speaker);
    u.label = static_cast<std::size_t>(label);
    u.text_feat = to_vector(require_field<std::vector<double>>(ju, "text_feat", line));
    u.audio_feat = to_vector(require_field<std::vector<double>>(ju, "audio_feat", line));
    u.visual_feat = to_vector(require_field<std::vector<double>>(ju, "visual_feat", line));
    conv.utterances.push_back(std::move(u));
  }
  return conv;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  using K = DataError::Kind;
  Dataset ds;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = parse_line(text, line);
    if (!have_header) {
      const auto classes = require_field<std::int64_t>(j, "num_classes", line);
      const auto speakers = require_field<std::int64_t>(j, "num_speakers", line);
      const auto dims = require_field<std::vector<std::int64_t>>(j, "dims", line);
      if (classes <= 0) throw DataError(K::invalid_value, line, "field 'num_classes' must be positive");
      if (speakers <= 0) throw DataError(K::invalid_value, line, "field 'num_speakers' must be positive");
      if (dims.size() != 3 || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
        throw DataError(K::invalid_value, line, "field 'dims' must hold three positive integers");
      }
      ds.num_classes = static_cast<std::size_t>(classes);
      ds.num_speakers = static_cast<std::size_t>(speakers);
      ds.dims = {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                 static_cast<std::size_t>(dims[2])};
      if (j.contains("split")) ds.split = parse_split(require_field<std::string>(j, "split", line), line);
      have_header = true;
      continue;
    }
    Conversation conv = parse_conversation(j, line);
    validate_conversation(ds, conv, line);
    ds.conversations.push_back(std::move(conv));
  }
  if (!have_header) throw DataError(K::malformed_json, line, "missing header line");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(DataError::Kind::missing_file, 0, "cannot open dataset '" + path.string() + "'");
  }
  return read_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  json header = {{"num_classes", ds.num_classes},
                 {"num_speakers", ds.num_speakers},
                 {"dims", {ds.dims.text, ds.dims.audio, ds.dims.visual}}};
  if (ds.split != Split::unspecified) header["split"] = split_name(ds.split);
  out << header.dump() << '\n';
  for (const Conversation& c : ds.conversations) {
    json utts = json::array();
    for (const Utterance& u : c.utterances) {
      utts.push_back({{"speaker_id", u.speaker_id},
                      {"label", u.label},
                      {"text_feat", to_std(u.text_feat)},
                      {"audio_feat", to_std(u.audio_feat)},
                      {"visual_feat", to_std(u.visual_feat)}});
    }
    out << json{{"id", c.id}, {"utterances", std::move(utts)}}.dump() << '\n';
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset '" + path.string() + "'");
  write_dataset(ds, out);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<std::size_t> class_counts(const Dataset& ds) {
  std::vector<std::size_t> counts(ds.num_classes, 0);
  for (const auto& c : ds.conversations) {
    for (const auto& u : c.utterances) ++counts.at(u.label);
  }
  return counts;
}

std::pair<Dataset, Dataset> split_conversations(const Dataset& ds, std::size_t n_first) {
  Dataset head = ds;
  Dataset tail = ds;
  n_first = std::min(n_first, ds.conversations.size());
  head.conversations.assign(ds.conversations.begin(), ds.conversations.begin() + static_cast<std::ptrdiff_t>(n_first));
  tail.conversations.assign(ds.conversations.begin() + static_cast<std::ptrdiff_t>(n_first), ds.conversations.end());
  return {std::move(head), std::move(tail)};
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, n);
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes == 0 || cfg.class_probs.size() != cfg.num_classes) {
    throw std::invalid_argument("class_probs must hold one probability per class");
  }
  double total = 0.0;
  for (double p : cfg.class_probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("class_probs entries must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("class_probs must sum to 1");
  if (!(cfg.separation > 0.0)) throw std::invalid_argument("cluster separation must be positive");
  if (!(cfg.noise >= 0.0)) throw std::invalid_argument("noise must be non-negative");
  if (cfg.min_length == 0 || cfg.min_length > cfg.max_length) {
    throw std::invalid_argument("utterance length range is empty");
  }
  if (cfg.num_speakers == 0) throw std::invalid_argument("num_speakers must be positive");
  if (cfg.dims.text == 0 || cfg.dims.audio == 0 || cfg.dims.visual == 0) {
    throw std::invalid_argument("feature dimensions must be positive");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index latent = static_cast<Index>(std::max({cfg.dims.text, cfg.dims.audio, cfg.dims.visual}));
  Matrix base(static_cast<Index>(cfg.num_classes), latent);
  for (Index c = 0; c < base.rows(); ++c) {
    for (Index k = 0; k < latent; ++k) base(c, k) = normal(rng);
  }

  // means[m] is C x d_m.
  std::array<Matrix, kNumModalities> means;
  for (Modality m : kModalities) {
    const Index d = static_cast<Index>(cfg.dims[m]);
    Matrix rot = random_orthogonal(d, rng);
    Matrix mu(base.rows(), d);
    for (Index c = 0; c < base.rows(); ++c) {
      Vector head = base.row(c).head(d).transpose();
      double n = head.norm();
      if (n == 0.0) head(0) = n = 1.0;
      mu.row(c) = (rot * head * (cfg.separation / n)).transpose();
    }
    means[static_cast<int>(m)] = std::move(mu);
  }

  std::discrete_distribution<std::size_t> label_dist(cfg.class_probs.begin(), cfg.class_probs.end());
  std::uniform_int_distribution<std::size_t> len_dist(cfg.min_length, cfg.max_length);
  std::uniform_int_distribution<std::size_t> speaker_dist(0, cfg.num_speakers - 1);

  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.num_speakers = cfg.num_speakers;
  ds.dims = cfg.dims;
  ds.conversations.reserve(cfg.n_conversations);
  for (std::size_t ci = 0; ci < cfg.n_conversations; ++ci) {
    Conversation conv;
    conv.id = "synth-" + std::to_string(ci);
    const std::size_t len = len_dist(rng);
    for (std::size_t i = 0; i < len; ++i) {
      Utterance u;
      u.speaker_id = speaker_dist(rng);
      u.label = label_dist(rng);
      for (Modality m : kModalities) {
        const Matrix& mu = means[static_cast<int>(m)];
        Vector f = mu.row(static_cast<Index>(u.label)).transpose();
        for (Index k = 0; k < f.size(); ++k) f(k) += cfg.noise * normal(rng);
        switch (m) {
          case Modality::text: u.text_feat = std::move(f); break;
          case Modality::audio: u.audio_feat = std::move(f); break;
          case Modality::visual: u.visual_feat = std::move(f); break;
        }
      }
      conv.utterances.push_back(std::move(u));
    }
    ds.conversations.push_back(std::move(conv));
  }
  return ds;
}

}  // namespace conxgnn
