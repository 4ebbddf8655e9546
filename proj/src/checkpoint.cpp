#include "conxgnn/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace conxgnn {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'O', 'N', 'X', 'G', 'N', 'N', '\0'};

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  json windows = json::array();
  for (const Window& w : c.windows) windows.push_back({w.past, w.future});
  return {{"dims", {c.dims.text, c.dims.audio, c.dims.visual}},
          {"num_speakers", c.num_speakers},
          {"num_classes", c.num_classes},
          {"hidden", c.hidden},
          {"text_layers", c.text_layers},
          {"text_heads", c.text_heads},
          {"graph_heads", c.graph_heads},
          {"attention_dim", c.attention_dim},
          {"embedding_dim", c.embedding_dim},
          {"windows", windows},
          {"kgnn_layers", c.kgnn_layers},
          {"hypergraph_layers", c.hypergraph_layers},
          {"max_utterances", c.max_utterances},
          {"ablations",
           {{"disable_igm", c.ablations.disable_igm},
            {"disable_hm", c.ablations.disable_hm},
            {"disable_crossmodal", c.ablations.disable_crossmodal},
            {"disable_reweight", c.ablations.disable_reweight}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  const auto dims = j.at("dims").get<std::vector<std::size_t>>();
  if (dims.size() != 3) throw std::runtime_error("model config: dims must have three entries");
  c.dims = {dims[0], dims[1], dims[2]};
  c.num_speakers = j.at("num_speakers").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.hidden = j.at("hidden").get<Index>();
  c.text_layers = j.at("text_layers").get<int>();
  c.text_heads = j.at("text_heads").get<int>();
  c.graph_heads = j.at("graph_heads").get<int>();
  c.attention_dim = j.at("attention_dim").get<Index>();
  c.embedding_dim = j.at("embedding_dim").get<Index>();
  c.windows.clear();
  for (const auto& w : j.at("windows")) c.windows.push_back({w.at(0).get<int>(), w.at(1).get<int>()});
  c.kgnn_layers = j.at("kgnn_layers").get<int>();
  c.hypergraph_layers = j.at("hypergraph_layers").get<int>();
  c.max_utterances = j.at("max_utterances").get<Index>();
  const json& ab = j.at("ablations");
  c.ablations = {ab.at("disable_igm").get<bool>(), ab.at("disable_hm").get<bool>(),
                 ab.at("disable_crossmodal").get<bool>(), ab.at("disable_reweight").get<bool>()};
  return c;
}

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void string(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix_data(const Matrix& m) {
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string string() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw std::runtime_error("checkpoint: implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  Matrix matrix_data(Index rows, Index cols) {
    Matrix m(rows, cols);
    in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    check();
    return m;
  }

 private:
  void check() {
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
  }
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ConxGnn& model, const Adam& optimizer, int epoch,
                     const std::mt19937_64& rng) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.string(model_config_to_json(model.config()).dump());
  w.pod<std::int32_t>(epoch);
  w.pod<std::int64_t>(optimizer.step());
  w.pod<double>(optimizer.lr());
  w.pod<double>(optimizer.beta1());
  w.pod<double>(optimizer.beta2());
  w.pod<double>(optimizer.eps());
  std::ostringstream rng_state;
  rng_state << rng;
  w.string(rng_state.str());

  std::uint64_t count = 0;
  model.visit([&count](const Parameter&) { ++count; });
  w.pod<std::uint64_t>(count);
  model.visit([&](const Parameter& p) {
    w.string(p.name);
    w.pod<std::int64_t>(p.value.rows());
    w.pod<std::int64_t>(p.value.cols());
    w.matrix_data(p.value);
    auto it = optimizer.moments().find(p.name);
    w.pod<std::uint8_t>(it != optimizer.moments().end() ? 1 : 0);
    if (it != optimizer.moments().end()) {
      w.matrix_data(it->second.first);
      w.matrix_data(it->second.second);
    }
  });
  if (!out) throw std::runtime_error("write failed for checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  Reader r(in);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const ModelConfig config = model_config_from_json(json::parse(r.string()));
  const int epoch = r.pod<std::int32_t>();
  const auto step = r.pod<std::int64_t>();
  const double lr = r.pod<double>();
  const double beta1 = r.pod<double>();
  const double beta2 = r.pod<double>();
  const double eps = r.pod<double>();
  std::mt19937_64 rng;
  std::istringstream rng_state(r.string());
  rng_state >> rng;
  if (!rng_state) throw std::runtime_error("checkpoint: corrupt RNG state");

  ConxGnn model(config, 0);
  std::unordered_map<std::string, Parameter*> by_name;
  model.visit([&by_name](Parameter& p) { by_name.emplace(p.name, &p); });

  const auto count = r.pod<std::uint64_t>();
  if (count != by_name.size()) throw std::runtime_error("checkpoint: parameter count does not match configuration");
  std::map<std::string, AdamMoments> moments;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.string();
    const auto rows = r.pod<std::int64_t>();
    const auto cols = r.pod<std::int64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
    Parameter& p = *it->second;
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    p.value = r.matrix_data(rows, cols);
    if (r.pod<std::uint8_t>() != 0) {
      AdamMoments m;
      m.first = r.matrix_data(rows, cols);
      m.second = r.matrix_data(rows, cols);
      moments.emplace(name, std::move(m));
    }
  }
  Adam adam(lr, beta1, beta2, eps);
  adam.restore(step, std::move(moments));
  return Checkpoint{std::move(model), std::move(adam), epoch, rng};
}

}  // namespace conxgnn
