// bbits: train / analyze jointly quantized and pruned networks.
//
// Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 divergence.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bb/checkpoint.hpp"
#include "bb/objective.hpp"
#include "bb/report.hpp"
#include "bb/training.hpp"

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.contains(it.key()))
      throw std::invalid_argument("unknown key \"" + it.key() + "\" in " + where);
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bb::FormatError("cannot open " + path, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": invalid JSON: " + e.what());
  }
}

std::string default_data_dir() {
  const char* env = std::getenv("BBITS_DATA_DIR");
  return env ? env : "data";
}

struct DataPair {
  bb::Dataset train, test;
};

DataPair load_data(const json& cfg, const std::string& data_dir) {
  reject_unknown(cfg, {"kind", "dir", "train_count", "test_count", "standardize", "seed", "n",
                       "classes", "features", "margin"},
                 "data");
  const std::string kind = cfg.value("kind", "mnist");
  DataPair d;
  if (kind == "mnist") {
    std::string dir = cfg.value("dir", data_dir);
    d.train = bb::load_mnist_idx(dir + "/train-images-idx3-ubyte",
                                 dir + "/train-labels-idx1-ubyte",
                                 cfg.value("standardize", false));
    d.test = bb::load_mnist_idx(dir + "/test-images-idx3-ubyte",
                                dir + "/test-labels-idx1-ubyte",
                                cfg.value("standardize", false));
    if (cfg.contains("train_count")) d.train = d.train.take(cfg.at("train_count"));
    if (cfg.contains("test_count")) d.test = d.test.take(cfg.at("test_count"));
  } else if (kind == "synth") {
    const std::uint64_t seed = cfg.value("seed", 1);
    const std::size_t n = cfg.value("n", std::size_t{512});
    const int classes = cfg.value("classes", 4);
    const std::size_t features = cfg.value("features", std::size_t{16});
    const double margin = cfg.value("margin", 4.0);
    // One draw, then split, so train and test share the class centers.
    const std::size_t test_n = n / 2 > 0 ? n / 2 : 1;
    bb::Dataset full = bb::synth_dataset(seed, n + test_n, classes, features, margin);
    d.train = full.take(n);
    std::vector<std::size_t> test_idx(test_n);
    for (std::size_t i = 0; i < test_n; ++i) test_idx[i] = n + i;
    d.test = full.subset(test_idx);
  } else {
    throw std::invalid_argument("data.kind must be \"mnist\" or \"synth\"");
  }
  return d;
}

bb::TrainConfig parse_train_cfg(const json& cfg) {
  reject_unknown(cfg, {"epochs", "finetune_epochs", "batch_size", "lr_weights", "lr_gates",
                       "lr_finetune", "momentum", "mu", "seed", "schedule", "step_gamma"},
                 "train");
  bb::TrainConfig t;
  t.epochs = cfg.value("epochs", t.epochs);
  t.finetune_epochs = cfg.value("finetune_epochs", t.finetune_epochs);
  t.batch_size = cfg.value("batch_size", t.batch_size);
  t.lr_weights = cfg.value("lr_weights", t.lr_weights);
  t.lr_gates = cfg.value("lr_gates", t.lr_gates);
  t.lr_finetune = cfg.value("lr_finetune", t.lr_finetune);
  t.momentum = cfg.value("momentum", t.momentum);
  t.mu = cfg.value("mu", t.mu);
  t.seed = cfg.value("seed", t.seed);
  t.step_gamma = cfg.value("step_gamma", t.step_gamma);
  if (cfg.contains("schedule")) t.schedule = bb::parse_schedule(cfg.at("schedule"));
  return t;
}

std::map<std::string, double> echo(const bb::TrainConfig& t) {
  return {{"epochs", static_cast<double>(t.epochs)},
          {"finetune_epochs", static_cast<double>(t.finetune_epochs)},
          {"batch_size", static_cast<double>(t.batch_size)},
          {"lr_weights", t.lr_weights},
          {"lr_gates", t.lr_gates},
          {"lr_finetune", t.lr_finetune},
          {"momentum", t.momentum},
          {"mu", t.mu},
          {"seed", static_cast<double>(t.seed)},
          {"step_gamma", t.step_gamma}};
}

struct CommonArgs {
  std::string config;
  std::string out = "out";
  std::string checkpoint;
  std::string data_dir = default_data_dir();
  std::vector<double> mu;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_config, bool needs_ckpt) {
  auto* c = cmd->add_option("-c,--config", a.config, "JSON config file");
  if (needs_config) c->required();
  cmd->add_option("-o,--out", a.out, "output directory");
  auto* k = cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint to load");
  if (needs_ckpt) k->required();
  cmd->add_option("--data-dir", a.data_dir, "dataset directory (default $BBITS_DATA_DIR)");
  cmd->add_option("--mu", a.mu, "regularizer strength; repeat for a sweep");
  cmd->add_option("--seed", a.seed, "RNG seed override");
  cmd->add_flag("-v,--verbose", a.verbose, "per-epoch progress");
}

struct LoadedConfig {
  bb::ArchSpec arch;
  json data_cfg = json::object();
  bb::TrainConfig train;
};

LoadedConfig read_config(const CommonArgs& a) {
  LoadedConfig lc;
  json j = load_json(a.config);
  reject_unknown(j, {"arch", "data", "train"}, "config");
  if (!j.contains("arch")) throw std::invalid_argument("config: missing \"arch\"");
  lc.arch = bb::parse_arch_json(j.at("arch").dump());
  if (j.contains("data")) lc.data_cfg = j.at("data");
  if (j.contains("train")) lc.train = parse_train_cfg(j.at("train"));
  if (a.seed) lc.train.seed = *a.seed;
  if (a.mu.size() == 1) lc.train.mu = a.mu[0];
  lc.train.verbose = a.verbose;
  return lc;
}

void ensure_out(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir);
}

void write_outputs(const std::string& out, const bb::Model& model,
                   const bb::TrainResult& result, const bb::TrainConfig& cfg) {
  ensure_out(out);
  bb::write_file_atomic(out + "/report.json",
                        bb::architecture_report(model, &result, echo(cfg)));
  bb::save_checkpoint(out + "/model.ckpt", model);
}

int cmd_train(const CommonArgs& a) {
  LoadedConfig lc = read_config(a);
  DataPair data = load_data(lc.data_cfg, a.data_dir);

  std::vector<double> mus = a.mu.size() > 1 ? a.mu : std::vector<double>{lc.train.mu};
  std::vector<std::tuple<double, double, double>> pareto;
  for (std::size_t i = 0; i < mus.size(); ++i) {
    bb::TrainConfig cfg = lc.train;
    cfg.mu = mus[i];
    bb::Model model(lc.arch, cfg.seed);
    bb::TrainResult result = bb::train_joint(model, data.train, data.test, cfg);
    if (cfg.finetune_epochs > 0)
      result = bb::fix_gates_and_finetune(model, data.train, data.test, cfg);
    pareto.emplace_back(cfg.mu, result.final_accuracy, result.bops.relative_percent);
    const std::string out =
        mus.size() > 1 ? a.out + "/mu" + std::to_string(i) : a.out;
    write_outputs(out, model, result, cfg);
    std::printf("mu=%g  accuracy=%.4f  relative_bops=%.4f%%\n", cfg.mu,
                result.final_accuracy, result.bops.relative_percent);
  }
  if (mus.size() > 1) {
    ensure_out(a.out);
    bb::write_file_atomic(a.out + "/pareto.csv", bb::pareto_csv(pareto));
  }
  return 0;
}

int cmd_finetune(const CommonArgs& a) {
  LoadedConfig lc = read_config(a);
  DataPair data = load_data(lc.data_cfg, a.data_dir);
  bb::Model model = bb::load_checkpoint(a.checkpoint);
  bb::TrainResult result = bb::fix_gates_and_finetune(model, data.train, data.test, lc.train);
  write_outputs(a.out, model, result, lc.train);
  std::printf("accuracy=%.4f  relative_bops=%.4f%%\n", result.final_accuracy,
              result.bops.relative_percent);
  return 0;
}

int cmd_post_train(const CommonArgs& a, bool learn_scales) {
  LoadedConfig lc = read_config(a);
  DataPair data = load_data(lc.data_cfg, a.data_dir);
  bb::Model model = bb::load_checkpoint(a.checkpoint);
  bb::TrainResult result =
      bb::post_train(model, data.train, data.test, lc.train, learn_scales);
  write_outputs(a.out, model, result, lc.train);
  std::printf("accuracy=%.4f  relative_bops=%.4f%%\n", result.final_accuracy,
              result.bops.relative_percent);
  return 0;
}

int cmd_baseline(const CommonArgs& a, int low_bit) {
  LoadedConfig lc = read_config(a);
  DataPair data = load_data(lc.data_cfg, a.data_dir);
  bb::Model model = bb::load_checkpoint(a.checkpoint);
  auto points = bb::sensitivity_baseline(model, data.test, low_bit);
  ensure_out(a.out);
  bb::write_file_atomic(a.out + "/baseline.csv", bb::baseline_csv(points));
  for (const auto& p : points)
    std::printf("accuracy=%.4f  relative_bops=%.4f%%\n", p.accuracy, p.relative_bops);
  return 0;
}

int cmd_bops(const CommonArgs& a) {
  LoadedConfig lc = read_config(a);
  bb::Model model(lc.arch, 0);
  // Forced bit widths come from the declared per-layer bits_w / bits_a.
  std::map<std::string, int> forced;
  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    const bb::ModelLayer& l = model.layers()[li];
    if (l.decl.kind == bb::LayerDecl::Kind::MaxPool) continue;
    forced[model.quantizers()[static_cast<std::size_t>(l.weight_q)].id] = l.decl.bits_w;
    forced[model.quantizers()[static_cast<std::size_t>(l.input_q)].id] = l.decl.bits_a;
  }
  const bb::BopTotals totals = model.bops(&forced);
  ensure_out(a.out);
  json j;
  j["arch"] = json::parse(bb::arch_to_json(model.arch()));
  j["bops_total"] = totals.absolute;
  j["bops_relative_percent"] = totals.relative_percent;
  json layers = json::object();
  for (std::size_t i = 0; i < model.cost().layers.size(); ++i) {
    const bb::LayerCost& lcst = model.cost().layers[i];
    layers[lcst.id] = {{"macs", bb::mac_count(lcst)}, {"bops", totals.per_layer[i]}};
  }
  j["layers"] = layers;
  bb::write_file_atomic(a.out + "/bops.json", j.dump(2) + "\n");
  std::printf("total_bops=%.0f  relative=%.6f%%\n", totals.absolute,
              totals.relative_percent);
  return 0;
}

// Self-contained oracle suites; nonzero exit on any failure.
int cmd_check() {
  int failures = 0;
  auto report = [&failures](const char* name, bool ok) {
    std::printf("%-24s %s\n", name, ok ? "ok" : "FAIL");
    if (!ok) ++failures;
  };

  // Gated decomposition against direct uniform quantization at every width.
  {
    bool ok = true;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> bd(0.5, 3.0);
    for (int bits : {2, 4, 8, 16, 32}) {
      for (int trial = 0; trial < 200 && ok; ++trial) {
        bb::Quantizer q;
        q.id = "chk";
        q.beta = bd(rng);
        q.is_signed = true;
        q.init();
        // In-range inputs; the exact clip boundary -beta sits on a rounding
        // tie where the one-step difference between nested and direct
        // rounding is legitimate.
        std::uniform_real_distribution<double> ud(-q.beta, q.beta);
        std::vector<double> xs(64);
        for (double& v : xs) v = ud(rng);
        bb::Graph g(0);
        bb::Tensor x = g.leaf({xs.size()}, xs);
        bb::QuantizeOptions opt;
        opt.mode = bb::GateMode::Forced;
        opt.forced = bb::forced_gates_for_bits(q, bits);
        const auto& got = bb::quantize(x, q, g, opt).value();
        const double alpha = -q.beta;
        const double s = (q.beta - alpha) / (std::pow(2.0, bits) - 1.0);
        const double hi = (1.0 - 1e-7) * q.beta;
        for (std::size_t i = 0; i < xs.size(); ++i) {
          // Same clip arithmetic as the quantizer so ties resolve identically.
          const double c = hi - std::max(0.0, hi - alpha - std::max(0.0, xs[i] - alpha));
          const double direct = s * std::nearbyint(c / s);
          if (std::abs(got[i] - direct) > 1e-9) ok = false;
        }
      }
    }
    report("decomposition-oracle", ok);
  }

  // Central finite differences through a small quantized layer.
  {
    bool ok = true;
    std::vector<double> w = {0.3, -0.8, 0.55, -0.1, 0.9, -0.4};
    const double h = 1e-5;
    auto loss_at = [&](const std::vector<double>& wv) {
      bb::Graph g(3);
      bb::Tensor wt = g.leaf({2, 3}, wv);
      bb::Tensor xt = g.leaf({1, 2}, {0.7, -1.3});
      bb::Tensor logits = bb::matmul(xt, wt);
      return bb::softmax_cross_entropy(logits, {1}).scalar();
    };
    bb::Graph g(3);
    bb::Tensor wt = g.leaf({2, 3}, w);
    bb::Tensor xt = g.leaf({1, 2}, {0.7, -1.3});
    bb::Tensor loss = bb::softmax_cross_entropy(bb::matmul(xt, wt), {1});
    g.backward(loss);
    for (std::size_t i = 0; i < w.size(); ++i) {
      std::vector<double> wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      const double num = (loss_at(wp) - loss_at(wm)) / (2 * h);
      const double ana = wt.grad()[i];
      const double scale = std::max({std::abs(num), std::abs(ana), 1e-8});
      if (std::abs(num - ana) / scale > 1e-4) ok = false;
    }
    report("gradient-oracle", ok);
  }

  // Expected-L0 chain identity, closed form vs enumeration.
  {
    bool ok = true;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ud(0.05, 0.95);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> q(1 + rng() % 5);
      for (double& v : q) v = ud(rng);
      auto [lhs, rhs] = bb::l0_identity_check(q);
      if (std::abs(lhs - rhs) > 1e-12) ok = false;
    }
    report("l0-identity", ok);
  }

  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint mixed-precision quantization and pruning"};
  app.require_subcommand(1);

  CommonArgs train_a, finetune_a, post_a, base_a, bops_a;
  bool post_scales = false;

  add_common(app.add_subcommand("train", "train from scratch"), train_a, true, false);
  add_common(app.add_subcommand("finetune", "fix gates, fine-tune weights"), finetune_a,
             true, true);
  auto* post = app.add_subcommand("post-train", "optimize gates on a frozen model");
  add_common(post, post_a, true, true);
  post->add_flag("--scales", post_scales, "also learn quantizer ranges");
  auto* base = app.add_subcommand("baseline", "iterative sensitivity baseline");
  add_common(base, base_a, true, true);
  int base_bits = 8;
  base->add_option("--bits", base_bits, "low bit width to sweep quantizers down to")
      ->check(CLI::IsMember({2, 4, 8}));
  add_common(app.add_subcommand("bops", "static BOP analysis of a declared net"), bops_a,
             true, false);
  app.add_subcommand("check", "run the oracle suites");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("train")) return cmd_train(train_a);
    if (app.got_subcommand("finetune")) return cmd_finetune(finetune_a);
    if (app.got_subcommand("post-train")) return cmd_post_train(post_a, post_scales);
    if (app.got_subcommand("baseline")) return cmd_baseline(base_a, base_bits);
    if (app.got_subcommand("bops")) return cmd_bops(bops_a);
    if (app.got_subcommand("check")) return cmd_check();
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const bb::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const bb::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
