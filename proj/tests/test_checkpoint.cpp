#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "conxgnn/checkpoint.hpp"

using namespace conxgnn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("conxgnn_ckpt_" + std::to_string(::getpid()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
};

Dataset data() {
  SyntheticConfig syn;
  syn.dims = {8, 6, 5};
  syn.n_conversations = 6;
  syn.min_length = 3;
  syn.max_length = 5;
  return generate_synthetic(syn, 12);
}

TrainConfig config() {
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.batch_size = 2;
  cfg.lr = 1e-2;
  cfg.windows = {{2, 2}};
  cfg.hypergraph_layers = 2;
  cfg.epochs = 3;
  return cfg;
}

std::vector<Matrix> params_of(const ConxGnn& m) {
  std::vector<Matrix> out;
  m.visit([&](const Parameter& p) { out.push_back(p.value); });
  return out;
}

}  // namespace

TEST_CASE("model config JSON round trip") {
  ModelConfig c = model_config_for(data());
  c.windows = {{4, 1}, {2, 3}};
  c.ablations.disable_crossmodal = true;
  c.attention_dim = 12;
  CHECK(model_config_from_json(model_config_to_json(c)) == c);
}

TEST_CASE("save -> load -> save is byte identical") {
  TempDir dir;
  const Dataset ds = data();
  Trainer trainer(ds, nullptr, config());
  trainer.run_epoch();
  save_checkpoint(dir.path / "a.ckpt", trainer.model(), trainer.optimizer(), trainer.epoch(), trainer.rng());
  const Checkpoint ck = load_checkpoint(dir.path / "a.ckpt");
  CHECK(ck.epoch == 1);
  CHECK(ck.model.config() == trainer.model().config());
  CHECK(params_of(ck.model) == params_of(trainer.model()));
  CHECK(ck.rng == trainer.rng());
  CHECK(ck.optimizer.step() == trainer.optimizer().step());
  save_checkpoint(dir.path / "b.ckpt", ck.model, ck.optimizer, ck.epoch, ck.rng);
  CHECK(slurp(dir.path / "a.ckpt") == slurp(dir.path / "b.ckpt"));
}

TEST_CASE("resuming from a checkpoint reproduces uninterrupted training") {
  TempDir dir;
  const Dataset ds = data();
  Trainer straight(ds, nullptr, config());
  straight.run_epoch();
  straight.run_epoch();
  const EpochMetrics last = straight.run_epoch();

  Trainer first(ds, nullptr, config());
  first.run_epoch();
  first.run_epoch();
  save_checkpoint(dir.path / "mid.ckpt", first.model(), first.optimizer(), first.epoch(), first.rng());

  Checkpoint ck = load_checkpoint(dir.path / "mid.ckpt");
  Trainer resumed(ds, nullptr, config());
  resumed.restore(std::move(ck.model), std::move(ck.optimizer), ck.epoch, ck.rng);
  const EpochMetrics again = resumed.run_epoch();
  CHECK(again.epoch == 3);
  CHECK(again.train_loss == last.train_loss);
  CHECK(params_of(resumed.model()) == params_of(straight.model()));
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir;
  const Dataset ds = data();
  Trainer trainer(ds, nullptr, config());
  save_checkpoint(dir.path / "ok.ckpt", trainer.model(), trainer.optimizer(), 0, trainer.rng());
  const std::string bytes = slurp(dir.path / "ok.ckpt");

  SUBCASE("missing") { CHECK_THROWS_AS(load_checkpoint(dir.path / "nope.ckpt"), std::runtime_error); }
  SUBCASE("bad magic") {
    std::ofstream(dir.path / "bad.ckpt", std::ios::binary) << "NOTACKPT" << bytes.substr(8);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "bad.ckpt"), std::runtime_error);
  }
  SUBCASE("truncated") {
    std::ofstream(dir.path / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "short.ckpt"), std::runtime_error);
  }
  SUBCASE("unknown version") {
    std::string v = bytes;
    v[8] = 9;
    std::ofstream(dir.path / "v.ckpt", std::ios::binary) << v;
    CHECK_THROWS_AS(load_checkpoint(dir.path / "v.ckpt"), std::runtime_error);
  }
}

TEST_CASE("restore rejects a different configuration") {
  const Dataset ds = data();
  Trainer trainer(ds, nullptr, config());
  TrainConfig other = config();
  other.hidden = 16;
  Trainer wider(ds, nullptr, other);
  CHECK_THROWS_AS(trainer.restore(wider.model(), wider.optimizer(), 0, wider.rng()), std::invalid_argument);
}
