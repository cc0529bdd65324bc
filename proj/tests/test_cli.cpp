#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "omega/cli.hpp"
#include "omega/config.hpp"
#include "omega/dataset.hpp"

using namespace omega;
namespace fs = std::filesystem;

namespace {

int cli(std::initializer_list<const char*> args) {
  std::vector<const char*> argv{"omega_seg"};
  argv.insert(argv.end(), args.begin(), args.end());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("KvConfig: parsing, precedence and unknown keys") {
  TmpDir tmp("omega_cfg_test");
  {
    std::ofstream f(tmp.path / "run.cfg");
    f << "# comment\n"
      << "epochs = 5\n"
      << "variant=C\n"
      << "\n"
      << "alpha1 = 50.0   # trailing comment\n";
  }
  KvConfig cfg = KvConfig::from_file((tmp.path / "run.cfg").string());
  CHECK(cfg.get_int("epochs", 0) == 5);
  CHECK(cfg.get_str("variant", "") == "C");
  CHECK(cfg.get_double("alpha1", 0) == 50.0);
  cfg.set("epochs", "7");  // later set wins
  CHECK(cfg.get_int("epochs", 0) == 7);
  CHECK_THROWS_WITH(cfg.require_known_keys({"epochs", "variant"}), doctest::Contains("alpha1"));

  cfg.write_lock(tmp.path.string());
  CHECK(fs::exists(tmp.path / "run.lock"));
  const std::string lock = slurp(tmp.path / "run.lock");
  CHECK(lock.find("variant=C") != std::string::npos);
}

TEST_CASE("cli: invalid preset exits nonzero and names the choices") {
  TmpDir tmp("omega_cli_badpreset");
  const int rc = cli({"generate", "--preset", "bogus", "--out", (tmp.path / "d").c_str()});
  CHECK(rc != 0);
}

TEST_CASE("cli: full miniature pipeline") {
  TmpDir tmp("omega_cli_pipe");
  const fs::path data = tmp.path / "data";
  const fs::path cfg_path = tmp.path / "gen.cfg";
  {
    std::ofstream f(cfg_path);
    f << "subjects=3\nsa_slices=1\nframes=2\nimage_size=16\nfolds=3\n";
  }

  // generate
  CHECK(cli({"generate", "--config", cfg_path.c_str(), "--out", data.c_str(), "--seed", "5"}) == 0);
  CHECK(fs::exists(data / "run.lock"));
  Dataset ds = load_dataset(data.string());
  CHECK(ds.entries.size() == 18);

  // refusing to clobber without --force
  CHECK(cli({"generate", "--config", cfg_path.c_str(), "--out", data.c_str(), "--seed", "5"}) != 0);
  CHECK(cli({"generate", "--config", cfg_path.c_str(), "--out", data.c_str(), "--seed", "5",
             "--force"}) == 0);

  // unknown config key
  {
    std::ofstream f(tmp.path / "bad.cfg");
    f << "subjects=3\nnot_a_key=1\n";
  }
  CHECK(cli({"generate", "--config", (tmp.path / "bad.cfg").c_str(), "--out",
             (tmp.path / "d2").c_str()}) != 0);

  // train variant B, one fold, tiny settings
  const fs::path run = tmp.path / "run";
  {
    std::ofstream f(tmp.path / "train.cfg");
    f << "dataset=" << data.string() << "\ndepth=2\nbase_filters=4\nimage_size=16\n"
      << "epochs=1\nbatch_size=4\n";
  }
  CHECK(cli({"train", "--config", (tmp.path / "train.cfg").c_str(), "--out", run.c_str(),
             "--variant", "B", "--seed", "3", "--fold", "0"}) == 0);
  CHECK(fs::exists(run / "ckpt_fold0.ckpt"));
  const std::string log = slurp(run / "train_log_fold0.csv");
  CHECK(log.find("epoch,lr,L_SU,L_tx,L_ty,L_theta,L_s,L_It,L_Itheta,L_Is,"
                 "L_SH_1,L_SH_2,L_SH_3,L_total,val_wfiou_median") == 0);

  // variant A log keeps transformer columns empty
  const fs::path run_a = tmp.path / "run_a";
  CHECK(cli({"train", "--config", (tmp.path / "train.cfg").c_str(), "--out", run_a.c_str(),
             "--variant", "A", "--seed", "3", "--fold", "0"}) == 0);
  {
    std::ifstream f(run_a / "train_log_fold0.csv");
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    // epoch,lr,L_SU then 7 empty transformer cells and 3 empty hourglass cells
    CHECK(row.find(",,,,,,,,,,") != std::string::npos);
  }

  // evaluate on the held-out fold
  const fs::path eval_dir = tmp.path / "eval";
  CHECK(cli({"evaluate", "--dataset", data.c_str(), "--ckpt",
             (run / "ckpt_fold0.ckpt").c_str(), "--out", eval_dir.c_str()}) == 0);
  CHECK(fs::exists(eval_dir / "per_image_metrics.csv"));
  CHECK(fs::exists(eval_dir / "params.csv"));
  CHECK(fs::exists(eval_dir / "curve.csv"));
  CHECK(fs::exists(eval_dir / "summary.txt"));
  CHECK(fs::exists(eval_dir / "curve.svg"));
  CHECK(fs::exists(eval_dir / "bland_altman_theta.svg"));
  {
    // variant B evaluation emits metrics for unet_index 0 and 1
    const std::string metrics = slurp(eval_dir / "per_image_metrics.csv");
    CHECK(metrics.find(",0,") != std::string::npos);
    CHECK(metrics.find(",1,") != std::string::npos);
    const std::string summary = slurp(eval_dir / "summary.txt");
    CHECK(summary.find("auc=") != std::string::npos);
    CHECK(summary.find("failure_rate_at_0.90=") != std::string::npos);
  }

  // fold leakage is a hard error: fold 1 was part of training
  CHECK(cli({"evaluate", "--dataset", data.c_str(), "--ckpt",
             (run / "ckpt_fold0.ckpt").c_str(), "--out", (tmp.path / "eval_bad").c_str(),
             "--fold", "1"}) != 0);

  // predict
  const fs::path pred_dir = tmp.path / "pred";
  CHECK(cli({"predict", "--dataset", data.c_str(), "--ckpt", (run / "ckpt_fold0.ckpt").c_str(),
             "--out", pred_dir.c_str(), "--limit", "2"}) == 0);
  CHECK(fs::exists(pred_dir / "params.csv"));
  CHECK(fs::exists(pred_dir / "labels_pred/u0"));
  CHECK(fs::exists(pred_dir / "labels_pred/u1"));
  {
    std::string params = slurp(pred_dir / "params.csv");
    CHECK(params.find("sample_id,t_x,t_y,theta,s") == 0);
  }
}
