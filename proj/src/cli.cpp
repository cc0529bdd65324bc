#include "omega/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "omega/config.hpp"
#include "omega/dataset.hpp"
#include "omega/evaluate.hpp"
#include "omega/gradcheck_suite.hpp"
#include "omega/train.hpp"

namespace fs = std::filesystem;

namespace omega {

namespace {

// flags that every command understands
struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 42;
  bool seed_set = false;
  int workers = 0;
  bool workers_set = false;
  std::string variant;
  std::string preset;
  bool force = false;
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "root random seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--workers", args.workers, "worker thread count")->each([&](const std::string&) {
    args.workers_set = true;
  });
  cmd->add_option("--variant", args.variant, "network variant A|B|C|D")
      ->check(CLI::IsMember({"A", "B", "C", "D"}));
  cmd->add_option("--preset", args.preset, "dataset/network preset")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
  cmd->add_flag("--resume", args.resume, "resume from the last epoch checkpoint");
}

// defaults < config file < command-line flags
KvConfig resolve(const CommonArgs& args, const KvConfig& defaults) {
  KvConfig cfg = defaults;
  if (!args.config_path.empty()) {
    KvConfig file = KvConfig::from_file(args.config_path);
    std::istringstream ss(file.serialize());
    std::string line;
    while (std::getline(ss, line)) {
      const auto eq = line.find('=');
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  if (args.seed_set) cfg.set("seed", std::to_string(args.seed));
  if (!args.out_dir.empty()) cfg.set("out", args.out_dir);
  if (!args.variant.empty()) cfg.set("variant", args.variant);
  if (!args.preset.empty()) cfg.set("preset", args.preset);
  if (args.workers_set) cfg.set("workers", std::to_string(args.workers));
  if (args.force) cfg.set("force", "true");
  if (args.resume) cfg.set("resume", "true");
  return cfg;
}

void apply_threads(const KvConfig& cfg) {
  int workers = cfg.get_int("workers", 0);
  if (const char* env = std::getenv("OMEGA_SEG_THREADS")) workers = std::atoi(env);
  if (workers > 0) omp_set_num_threads(workers);
}

GenerateSpec spec_from(const KvConfig& cfg) {
  GenerateSpec spec = cfg.get_str("preset", "desk") == "paper" ? paper_preset() : desk_preset();
  spec.subjects = cfg.get_int("subjects", spec.subjects);
  spec.sa_slices = cfg.get_int("sa_slices", spec.sa_slices);
  spec.frames = cfg.get_int("frames", spec.frames);
  spec.size = cfg.get_int("image_size", spec.size);
  spec.folds = cfg.get_int("folds", spec.folds);
  return spec;
}

NetworkConfig network_from(const KvConfig& cfg) {
  NetworkConfig net;
  const std::string variant = cfg.get_str("variant", "B");
  check(variant.size() == 1 && variant[0] >= 'A' && variant[0] <= 'D',
        "config: variant must be one of A,B,C,D");
  net.variant = variant[0];
  const bool paper = cfg.get_str("preset", "desk") == "paper";
  net.unet.depth = cfg.get_int("depth", paper ? 4 : 3);
  net.unet.base_filters = cfg.get_int("base_filters", paper ? 16 : 8);
  net.unet.num_classes = 6;
  net.image_size = cfg.get_int("image_size", paper ? 256 : 64);
  net.alpha1 = cfg.get_double("alpha1", 100.0);
  net.alpha2 = cfg.get_double("alpha2", 100.0);
  net.alpha3 = cfg.get_double("alpha3", 0.1);
  net.alpha4 = cfg.get_double("alpha4", 1.0);
  return net;
}

int cmd_generate(const CommonArgs& args) {
  KvConfig defaults;
  defaults.set("preset", "desk");
  defaults.set("seed", "42");
  KvConfig cfg = resolve(args, defaults);
  cfg.require_known_keys({"preset", "seed", "out", "subjects", "sa_slices", "frames",
                          "image_size", "folds", "workers", "force"});
  apply_threads(cfg);
  const std::string out = cfg.get_str("out", "");
  check(!out.empty(), "generate: --out is required");
  if (fs::exists(out) && !fs::is_empty(out) && !cfg.get_bool("force", false))
    throw std::runtime_error("generate: output directory is not empty (use --force)");
  fs::create_directories(out);
  cfg.write_lock(out);
  generate_dataset(out, spec_from(cfg), cfg.get_u64("seed", 42));
  std::cout << "dataset written to " << out << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& dataset, int only_fold, int epochs_flag) {
  KvConfig defaults;
  defaults.set("preset", "desk");
  defaults.set("variant", "B");
  defaults.set("seed", "42");
  defaults.set("epochs", "16");
  defaults.set("batch_size", "8");
  KvConfig cfg = resolve(args, defaults);
  if (!dataset.empty()) cfg.set("dataset", dataset);
  if (only_fold >= 0) cfg.set("fold", std::to_string(only_fold));
  if (epochs_flag > 0) cfg.set("epochs", std::to_string(epochs_flag));
  cfg.require_known_keys({"preset", "variant", "seed", "out", "dataset", "epochs", "batch_size",
                          "depth", "base_filters", "image_size", "alpha1", "alpha2", "alpha3",
                          "alpha4", "aug_translate", "aug_rotate_deg", "aug_scale", "weight_decay",
                          "precision", "workers", "force", "resume", "fold"});
  apply_threads(cfg);
  TrainOptions opts;
  opts.dataset_dir = cfg.get_str("dataset", "");
  check(!opts.dataset_dir.empty(), "train: dataset= (or --config) is required");
  check(fs::exists(fs::path(opts.dataset_dir) / "manifest.csv"),
        "train: missing dataset at " + opts.dataset_dir);
  check(fs::exists(fs::path(opts.dataset_dir) / "folds.csv"),
        "train: missing fold file at " + opts.dataset_dir);
  opts.out_dir = cfg.get_str("out", "");
  check(!opts.out_dir.empty(), "train: --out is required");
  opts.net = network_from(cfg);
  opts.epochs = cfg.get_int("epochs", 16);
  opts.batch_size = cfg.get_int("batch_size", 8);
  opts.seed = cfg.get_u64("seed", 42);
  opts.weight_decay = cfg.get_double("weight_decay", 1e-4);
  opts.aug.translate = cfg.get_double("aug_translate", 0.15);
  opts.aug.rotate_deg = cfg.get_double("aug_rotate_deg", 15.0);
  opts.aug.scale_delta = cfg.get_double("aug_scale", 0.15);
  opts.use_double = cfg.get_str("precision", "single") == "double";
  opts.resume = cfg.get_bool("resume", false);
  opts.only_fold = cfg.get_int("fold", -1);
  cfg.write_lock(opts.out_dir);
  const auto results = train_command(opts);
  for (const auto& r : results)
    std::cout << "fold " << r.test_fold << ": " << r.checkpoint_path << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& dataset, const std::string& ckpt,
                 int fold_override) {
  KvConfig defaults;
  KvConfig cfg = resolve(args, defaults);
  if (!dataset.empty()) cfg.set("dataset", dataset);
  if (!ckpt.empty()) cfg.set("checkpoint", ckpt);
  if (fold_override >= 0) cfg.set("fold", std::to_string(fold_override));
  cfg.require_known_keys({"dataset", "checkpoint", "out", "fold", "precision", "workers",
                          "seed", "svg", "force"});
  apply_threads(cfg);
  EvalOptions opts;
  opts.dataset_dir = cfg.get_str("dataset", "");
  opts.checkpoint_path = cfg.get_str("checkpoint", "");
  opts.out_dir = cfg.get_str("out", "");
  check(!opts.dataset_dir.empty() && !opts.checkpoint_path.empty() && !opts.out_dir.empty(),
        "evaluate: dataset=, checkpoint= and --out are required");
  opts.fold_override = cfg.get_int("fold", -1);
  opts.use_double = cfg.get_str("precision", "single") == "double";
  opts.write_svg = cfg.get_bool("svg", true);
  cfg.write_lock(opts.out_dir);
  EvalResult res = evaluate_command(opts);
  std::cout << "fold " << res.test_fold << ": median wfIoU (final U-Net) "
            << res.wfiou_by_unet.back().median << ", AUC " << res.curve.auc << "\n";
  return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& dataset, const std::string& ckpt,
                int limit) {
  KvConfig defaults;
  KvConfig cfg = resolve(args, defaults);
  if (!dataset.empty()) cfg.set("dataset", dataset);
  if (!ckpt.empty()) cfg.set("checkpoint", ckpt);
  if (limit >= 0) cfg.set("limit", std::to_string(limit));
  cfg.require_known_keys({"dataset", "checkpoint", "out", "limit", "precision", "workers",
                          "seed", "force"});
  apply_threads(cfg);
  PredictOptions opts;
  opts.dataset_dir = cfg.get_str("dataset", "");
  opts.checkpoint_path = cfg.get_str("checkpoint", "");
  opts.out_dir = cfg.get_str("out", "");
  check(!opts.dataset_dir.empty() && !opts.checkpoint_path.empty() && !opts.out_dir.empty(),
        "predict: dataset=, checkpoint= and --out are required");
  opts.limit = cfg.get_int("limit", -1);
  opts.use_double = cfg.get_str("precision", "single") == "double";
  cfg.write_lock(opts.out_dir);
  predict_command(opts);
  std::cout << "predictions written to " << opts.out_dir << "\n";
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  KvConfig defaults;
  defaults.set("seed", "42");
  KvConfig cfg = resolve(args, defaults);
  cfg.require_known_keys({"seed", "workers", "out"});
  apply_threads(cfg);
  const auto cases = run_gradient_suite(cfg.get_u64("seed", 42));
  bool all_ok = true;
  for (const auto& c : cases) {
    std::cout << (c.passed ? "PASS" : "FAIL") << " " << c.name << " max_rel_error="
              << c.max_rel_error << " tol=" << c.tolerance << "\n";
    all_ok = all_ok && c.passed;
  }
  std::cout << (all_ok ? "gradient suite: all passed" : "gradient suite: FAILURES") << "\n";
  return all_ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"omega-seg: U-Net + rigid spatial transformer + stacked hourglass segmentation "
               "on synthetic cardiac phantoms"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, pred_args, grad_args;
  std::string train_dataset, eval_dataset, pred_dataset;
  int train_fold = -1, train_epochs = -1;
  std::string eval_ckpt, pred_ckpt;
  int eval_fold = -1, pred_limit = -1;

  CLI::App* gen = app.add_subcommand("generate", "render a synthetic phantom dataset");
  add_common(gen, gen_args);

  CLI::App* train = app.add_subcommand("train", "train one model per fold combination");
  add_common(train, train_args);
  train->add_option("--dataset", train_dataset, "dataset directory");
  train->add_option("--fold", train_fold, "train only this held-out fold");
  train->add_option("--epochs", train_epochs, "override epoch count");

  CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on its held-out fold");
  add_common(eval, eval_args);
  eval->add_option("--dataset", eval_dataset, "dataset directory");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path");
  eval->add_option("--fold", eval_fold, "fold override (leakage-checked)");

  CLI::App* pred = app.add_subcommand("predict", "write predicted params and label maps");
  add_common(pred, pred_args);
  pred->add_option("--dataset", pred_dataset, "dataset directory");
  pred->add_option("--ckpt", pred_ckpt, "checkpoint path");
  pred->add_option("--limit", pred_limit, "max images");

  CLI::App* grad = app.add_subcommand("gradcheck", "run the full gradient-check suite");
  add_common(grad, grad_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_args);
    if (train->parsed()) return cmd_train(train_args, train_dataset, train_fold, train_epochs);
    if (eval->parsed()) return cmd_evaluate(eval_args, eval_dataset, eval_ckpt, eval_fold);
    if (pred->parsed()) return cmd_predict(pred_args, pred_dataset, pred_ckpt, pred_limit);
    if (grad->parsed()) return cmd_gradcheck(grad_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace omega
