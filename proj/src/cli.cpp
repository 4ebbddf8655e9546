#include "conxgnn/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "conxgnn/checkpoint.hpp"
#include "conxgnn/data.hpp"
#include "conxgnn/gradcheck.hpp"
#include "conxgnn/graph_export.hpp"
#include "conxgnn/training.hpp"

namespace conxgnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw UsageError("'" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

long to_integer(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw UsageError("'" + key + "' expects an integer, got '" + text + "'");
  return v;
}

long to_positive(const std::string& key, const std::string& text) {
  const long v = to_integer(key, text);
  if (v < 1) throw UsageError("'" + key + "' must be >= 1");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError("'" + key + "' expects a boolean, got '" + text + "'");
}

}  // namespace

std::vector<Window> parse_windows(const std::string& text) {
  std::vector<Window> windows;
  std::stringstream pairs(text);
  std::string pair;
  while (std::getline(pairs, pair, ';')) {
    pair = trim(pair);
    if (pair.empty()) continue;
    const auto comma = pair.find(',');
    if (comma == std::string::npos) throw UsageError("window '" + pair + "' must look like p,f");
    const long p = to_positive("windows", trim(pair.substr(0, comma)));
    const long f = to_positive("windows", trim(pair.substr(comma + 1)));
    windows.push_back({static_cast<int>(p), static_cast<int>(f)});
  }
  if (windows.empty()) throw UsageError("--windows needs at least one p,f pair");
  return windows;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> values;
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    for (const auto& [key, v] : j.items()) {
      if (v.is_string()) {
        values[key] = v.get<std::string>();
      } else if (v.is_array() && key == "windows") {
        // [[p, f], ...]
        std::string joined;
        for (const auto& w : v) {
          if (!w.is_array() || w.size() != 2) throw UsageError("config: windows must be [[p, f], ...]");
          joined += (joined.empty() ? "" : ";") + w[0].dump() + "," + w[1].dump();
        }
        values[key] = joined;
      } else if (v.is_primitive() && !v.is_null()) {
        values[key] = v.dump();
      } else {
        throw UsageError("config: unsupported value for '" + key + "'");
      }
    }
    return values;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    values[key] = value;
  }
  return values;
}

namespace {

// ---------------------------------------------------------------------------
// Training settings shared by flags and config files.

struct Setting {
  const char* key;
  const char* help;
  bool flag;
};

constexpr Setting kTrainSettings[] = {
    {"data", "training split (JSONL)", false},
    {"val", "validation split (JSONL) for model selection", false},
    {"out", "output directory for metrics and checkpoints", false},
    {"checkpoint", "resume from this checkpoint", false},
    {"seed", "random seed", false},
    {"seeds", "number of independent runs (seed, seed+1, ...)", false},
    {"lr", "Adam learning rate", false},
    {"epochs", "number of epochs", false},
    {"beta", "class-balance beta in [0, 1)", false},
    {"mu", "weight of the contrastive loss", false},
    {"temperature", "contrastive temperature", false},
    {"batch-size", "conversations per optimizer step", false},
    {"windows", "inception branches as p1,f1;p2,f2;...", false},
    {"n-inc", "k-GNN layers per branch", false},
    {"n-hyp", "hypergraph convolution layers", false},
    {"d-h", "hidden size", false},
    {"no-igm", "disable the inception graph module", true},
    {"no-hm", "disable the hypergraph module", true},
    {"no-crossmodal", "disable cross-modal attention", true},
    {"no-reweight", "disable class re-weighting", true},
};

struct TrainRequest {
  TrainConfig config;
  std::string data, val, out, checkpoint;
  int seeds = 1;
};

void apply_setting(TrainRequest& req, const std::string& key, const std::string& value) {
  TrainConfig& c = req.config;
  if (key == "data") {
    req.data = value;
  } else if (key == "val") {
    req.val = value;
  } else if (key == "out") {
    req.out = value;
  } else if (key == "checkpoint") {
    req.checkpoint = value;
  } else if (key == "seed") {
    const long s = to_integer(key, value);
    if (s < 0) throw UsageError("'seed' must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "seeds") {
    req.seeds = static_cast<int>(to_positive(key, value));
  } else if (key == "lr") {
    c.lr = to_double(key, value);
  } else if (key == "epochs") {
    c.epochs = static_cast<int>(to_integer(key, value));
  } else if (key == "beta") {
    c.beta = to_double(key, value);
  } else if (key == "mu") {
    c.loss.mu = to_double(key, value);
  } else if (key == "temperature") {
    c.loss.temperature = to_double(key, value);
  } else if (key == "batch-size") {
    c.batch_size = static_cast<std::size_t>(to_positive(key, value));
  } else if (key == "windows") {
    c.windows = parse_windows(value);
  } else if (key == "n-inc") {
    c.kgnn_layers = static_cast<int>(to_integer(key, value));
  } else if (key == "n-hyp") {
    c.hypergraph_layers = static_cast<int>(to_integer(key, value));
  } else if (key == "d-h") {
    c.hidden = to_positive(key, value);
  } else if (key == "no-igm") {
    c.ablations.disable_igm = to_bool(key, value);
  } else if (key == "no-hm") {
    c.ablations.disable_hm = to_bool(key, value);
  } else if (key == "no-crossmodal") {
    c.ablations.disable_crossmodal = to_bool(key, value);
  } else if (key == "no-reweight") {
    c.ablations.disable_reweight = to_bool(key, value);
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"weighted_f1", m.weighted_f1},
          {"per_class_f1", m.per_class_f1},
          {"support", m.support}};
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// ---------------------------------------------------------------------------
// Subcommands

int run_train(const TrainRequest& req, std::ostream& out, std::ostream& err) {
  if (req.data.empty()) throw UsageError("train: --data is required");
  try {
    req.config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!req.checkpoint.empty() && req.seeds > 1) throw UsageError("--checkpoint cannot be combined with --seeds");

  const Dataset train_set = load_dataset(req.data);
  std::optional<Dataset> val_set;
  if (!req.val.empty()) val_set = load_dataset(req.val);
  const fs::path out_dir = req.out.empty() ? fs::path("conxgnn_run") : fs::path(req.out);

  json runs = json::array();
  std::vector<double> accs, f1s;
  for (int k = 0; k < req.seeds; ++k) {
    TrainConfig cfg = req.config;
    cfg.seed = req.config.seed + static_cast<std::uint64_t>(k);
    const fs::path dir = req.seeds > 1 ? out_dir / ("seed_" + std::to_string(cfg.seed)) : out_dir;
    fs::create_directories(dir);

    Trainer trainer(train_set, val_set ? &*val_set : nullptr, cfg);
    if (!req.checkpoint.empty()) {
      Checkpoint ck = load_checkpoint(req.checkpoint);
      trainer.restore(std::move(ck.model), std::move(ck.optimizer), ck.epoch, ck.rng);
    }
    std::ofstream metrics(dir / "metrics.jsonl", trainer.epoch() > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write '" + (dir / "metrics.jsonl").string() + "'");
    while (trainer.epoch() < cfg.epochs) {
      const EpochMetrics m = trainer.run_epoch();
      metrics << to_json_line(m) << std::endl;
      err << "[seed " << cfg.seed << "] " << to_json_line(m) << '\n';
      save_checkpoint(dir / "last.ckpt", trainer.model(), trainer.optimizer(), trainer.epoch(), trainer.rng());
    }
    const ConxGnn& best = trainer.best_model() ? *trainer.best_model() : trainer.model();
    save_checkpoint(dir / "best.ckpt", best, trainer.optimizer(), trainer.epoch(), trainer.rng());

    json run = {{"seed", cfg.seed}, {"best_epoch", trainer.best_model() ? trainer.best_epoch() : trainer.epoch()}};
    const Metrics train_metrics = evaluate(best, train_set);
    run["train"] = metrics_json(train_metrics);
    const Metrics& reported = val_set ? evaluate(best, *val_set) : train_metrics;
    if (val_set) run["val"] = metrics_json(reported);
    accs.push_back(reported.accuracy);
    f1s.push_back(reported.weighted_f1);
    runs.push_back(std::move(run));
  }

  const auto [acc_mean, acc_std] = mean_std(accs);
  const auto [f1_mean, f1_std] = mean_std(f1s);
  json summary = {{"runs", runs},
                  {"split", val_set ? "val" : "train"},
                  {"accuracy", {{"mean", acc_mean}, {"std", acc_std}}},
                  {"weighted_f1", {{"mean", f1_mean}, {"std", f1_std}}}};
  out << summary.dump(2) << '\n';
  err << "accuracy " << acc_mean << " ± " << acc_std << ", w-F1 " << f1_mean << " ± " << f1_std << " over "
      << req.seeds << " run(s)\n";
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = load_dataset(data);
  const ModelConfig& mc = ck.model.config();
  if (!(ds.dims == mc.dims) || ds.num_classes != mc.num_classes) {
    throw std::runtime_error("dataset '" + data + "' does not match the checkpoint's feature dims / class count");
  }
  json j = metrics_json(evaluate(ck.model, ds));
  j["epoch"] = ck.epoch;
  out << j.dump(2) << '\n';
  return 0;
}

int run_inspect(const std::string& data, std::size_t conv_index, const std::string& window_text,
                const std::string& checkpoint, std::uint64_t seed, const std::string& out_prefix, std::ostream& out) {
  const std::vector<Window> windows = parse_windows(window_text);
  if (windows.size() != 1) throw UsageError("--window takes a single p,f pair");
  const Dataset ds = load_dataset(data);
  if (conv_index >= ds.conversations.size()) {
    throw UsageError("--conv " + std::to_string(conv_index) + " out of range (dataset has " +
                     std::to_string(ds.conversations.size()) + " conversations)");
  }
  const Conversation& conv = ds.conversations[conv_index];
  std::optional<ConxGnn> model;
  if (!checkpoint.empty()) {
    model.emplace(load_checkpoint(checkpoint).model);
  } else {
    ModelConfig mc = model_config_for(ds);
    mc.max_utterances = std::max<Index>(mc.max_utterances, static_cast<Index>(conv.size()));
    model.emplace(mc, seed);
  }
  if (conv.size() > static_cast<std::size_t>(model->config().max_utterances)) {
    throw std::runtime_error("conversation longer than the model's max_utterances");
  }
  Tape tape(false);
  const RelationalGraph graph = build_graph(values_of(encode(tape, conv, model->encoder())), windows.front());
  HypergraphStructure hyper = build_incidence(static_cast<Index>(conv.size()));
  hyper.weights = hyperedge_weights(tape, model->hypergraph(), static_cast<Index>(conv.size())).value().transpose();

  const json graph_json = graph_to_json(graph);
  const json incidence_json = incidence_to_json(hyper);
  const std::string dot = graph_to_dot(graph, conv.id);
  if (out_prefix.empty()) {
    out << json{{"conversation", conv.id}, {"graph", graph_json}, {"incidence", incidence_json}, {"dot", dot}}.dump(2)
        << '\n';
    return 0;
  }
  auto write = [](const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << text;
  };
  write(out_prefix + ".graph.json", graph_json.dump(2) + "\n");
  write(out_prefix + ".incidence.json", incidence_json.dump(2) + "\n");
  write(out_prefix + ".dot", dot);
  out << "wrote " << out_prefix << ".{graph.json,incidence.json,dot}\n";
  return 0;
}

int run_grad_check(const GradCheckConfig& cfg, std::ostream& out) {
  const GradCheckReport report = run_gradient_suite(cfg);
  for (const auto& f : report.failures) {
    out << "FAIL instance " << f.instance << " " << f.parameter << " " << f.probe << ": analytic " << f.analytic
        << " numeric " << f.numeric << " rel " << f.relative_error << '\n';
  }
  out << (report.passed() ? "PASS" : "FAIL") << ": " << report.probes << " probes over " << report.parameters_checked
      << " parameter tensors in " << cfg.instances << " instances, max relative error " << report.max_relative_error
      << '\n';
  return report.passed() ? 0 : 1;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ConxGNN: multimodal emotion recognition in conversations"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes metrics.jsonl and checkpoints");
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> train_opts;
  for (const Setting& s : kTrainSettings) {
    const std::string flag = std::string("--") + s.key;
    train_opts[s.key] = s.flag ? train_cmd->add_flag(flag, s.help) : train_cmd->add_option(flag, raw[s.key], s.help);
  }
  std::string config_path;
  train_cmd->add_option("--config", config_path, "key = value or JSON file; flags take precedence");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Print metrics JSON for a checkpoint on a split");
  std::string eval_ckpt, eval_data;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "split to evaluate (JSONL)")->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic dataset");
  SyntheticConfig syn;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "output JSONL path")->required();
  synth_cmd->add_option("--seed", synth_seed, "random seed");
  synth_cmd->add_option("--conversations", syn.n_conversations, "number of conversations")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--min-length", syn.min_length, "shortest conversation")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--max-length", syn.max_length, "longest conversation")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--separation", syn.separation, "distance of class means from the origin");
  synth_cmd->add_option("--noise", syn.noise, "per-feature noise std");
  synth_cmd->add_option("--class-probs", syn.class_probs, "label distribution (one value per class)");

  // inspect-graph
  auto* inspect_cmd = app.add_subcommand("inspect-graph", "Export one conversation's graph and hypergraph");
  std::string inspect_data, inspect_window = "10,9", inspect_ckpt, inspect_out;
  std::size_t inspect_conv = 0;
  std::uint64_t inspect_seed = 0;
  inspect_cmd->add_option("--data", inspect_data, "dataset (JSONL)")->required();
  inspect_cmd->add_option("--conv", inspect_conv, "conversation index");
  inspect_cmd->add_option("--window", inspect_window, "p,f window")->capture_default_str();
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "encoder weights for edge weights (default: fresh model)");
  inspect_cmd->add_option("--seed", inspect_seed, "seed of the fresh model");
  inspect_cmd->add_option("--out", inspect_out, "write <out>.graph.json, <out>.incidence.json, <out>.dot");

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of every parameter gradient");
  GradCheckConfig gc;
  grad_cmd->add_option("--instances", gc.instances, "random instances")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", gc.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      TrainRequest req;
      if (!config_path.empty()) {
        for (const auto& [key, value] : parse_config_text(read_text(config_path))) {
          if (train_opts.count(key) == 0) throw UsageError("unknown config key '" + key + "'");
          if (train_opts[key]->count() == 0) apply_setting(req, key, value);
        }
      }
      for (const Setting& s : kTrainSettings) {
        if (train_opts[s.key]->count() > 0) apply_setting(req, s.key, s.flag ? "true" : raw[s.key]);
      }
      return run_train(req, out, err);
    }
    if (eval_cmd->parsed()) return run_eval(eval_ckpt, eval_data, out);
    if (synth_cmd->parsed()) {
      save_dataset(generate_synthetic(syn, synth_seed), synth_out);
      out << "wrote " << synth_out << '\n';
      return 0;
    }
    if (inspect_cmd->parsed()) {
      return run_inspect(inspect_data, inspect_conv, inspect_window, inspect_ckpt, inspect_seed, inspect_out, out);
    }
    if (grad_cmd->parsed()) return run_grad_check(gc, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace conxgnn::cli
