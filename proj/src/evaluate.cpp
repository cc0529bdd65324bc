#include "omega/evaluate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "omega/pgm.hpp"
#include "omega/preprocess.hpp"
#include "omega/report.hpp"

namespace fs = std::filesystem;

namespace omega {

namespace {

std::string sample_id_of(const DatasetEntry& e) {
  const std::string stem = fs::path(e.image_path).stem().string();
  return stem;
}

NetworkConfig config_from_checkpoint(const Checkpoint& ckpt) {
  NetworkConfig cfg;
  const std::string v = ckpt.meta_value("variant");
  check(v.size() == 1, "evaluate: checkpoint missing variant");
  cfg.variant = v[0];
  cfg.unet.depth = std::stoi(ckpt.meta_value("depth", "3"));
  cfg.unet.base_filters = std::stoi(ckpt.meta_value("base_filters", "8"));
  cfg.unet.num_classes = std::stoi(ckpt.meta_value("num_classes", "6"));
  cfg.image_size = std::stoi(ckpt.meta_value("image_size", "64"));
  return cfg;
}

std::set<int> train_fold_set(const Checkpoint& ckpt) {
  std::set<int> out;
  std::istringstream ss(ckpt.meta_value("train_folds"));
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

template <typename T>
struct InferenceOut {
  std::vector<Tensor<unsigned char>> labels;  // per unet index, original frame
  RigidParams params;
  bool has_params = false;
};

template <typename T>
std::vector<InferenceOut<T>> run_inference(OmegaNet<T>& net, const std::vector<Sample>& samples) {
  const int size = net.config.image_size;
  const int depth = net.config.hourglass_depth();
  const int n = static_cast<int>(samples.size());
  Tensor<T> images({n, 1, size, size});
  for (int i = 0; i < n; ++i) {
    PreprocessResult pre = preprocess(samples[static_cast<std::size_t>(i)].image, size);
    for (std::size_t j = 0; j < pre.image.numel(); ++j)
      images.data[static_cast<std::size_t>(i) * size * size + j] = static_cast<T>(pre.image.data[j]);
  }
  Graph<T> g(Graph<T>::Mode::kInfer, false);
  PlacedVars<T> placed = place_params(g, net.refs, false);
  ForwardTrace<T> trace = omega_forward<T>(g, net, placed, images, nullptr);

  std::vector<InferenceOut<T>> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    InferenceOut<T>& o = out[static_cast<std::size_t>(i)];
    o.labels.push_back(argmax_labels(g.value(trace.initial.probs), i));
    if (depth > 0) {
      const Tensor<T>& pv = g.value(trace.params_pred);
      o.params = {static_cast<double>(pv.at(i, 0)), static_cast<double>(pv.at(i, 1)),
                  static_cast<double>(pv.at(i, 2)), static_cast<double>(pv.at(i, 3))};
      o.has_params = true;
      Mat3 m = compose_similarity(o.params);
      const bool invertible = std::abs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) >= 1e-24;
      for (int d = 0; d < depth; ++d) {
        Tensor<unsigned char> canon = argmax_labels(g.value(trace.hourglass[static_cast<std::size_t>(d)].probs), i);
        // map back to the original frame with the inverse predicted matrix
        o.labels.push_back(invertible
                               ? warp_labels_nearest(canon, mat_inverse_similarity(m), size, size)
                               : Tensor<unsigned char>({size, size}));
      }
    }
  }
  return out;
}

template <typename T>
EvalResult evaluate_impl(const EvalOptions& opts) {
  Checkpoint ckpt = load_checkpoint(opts.checkpoint_path);
  Dataset ds = load_dataset(opts.dataset_dir);
  NetworkConfig cfg = config_from_checkpoint(ckpt);
  check(cfg.image_size == ds.image_size, "evaluate: dataset/checkpoint image size mismatch");

  OmegaNet<T> net;
  {
    Rng rng(1);
    net.init(cfg, rng);
  }
  net.from_checkpoint(ckpt);

  const std::set<int> trained = train_fold_set(ckpt);
  int fold = std::stoi(ckpt.meta_value("test_fold", "-1"));
  if (opts.fold_override >= 0) fold = opts.fold_override;
  check(fold >= 0 && fold < ds.num_folds, "evaluate: no valid held-out fold");
  if (trained.count(fold))
    throw std::runtime_error("evaluate: fold leakage, fold " + std::to_string(fold) +
                             " was used for training");
  // defense in depth: no eval subject may live in a training fold
  for (const auto& [subject, f] : ds.fold_of_subject)
    if (f == fold && trained.count(f))
      throw std::runtime_error("evaluate: fold leakage for subject " + std::to_string(subject));

  const std::vector<std::size_t> indices = ds.fold_indices(fold);
  check(!indices.empty(), "evaluate: empty fold");

  EvalResult result;
  result.test_fold = fold;
  result.depth = cfg.hourglass_depth();

  fs::create_directories(opts.out_dir);
  std::ofstream metrics_csv(fs::path(opts.out_dir) / "per_image_metrics.csv");
  metrics_csv << "sample_id,view,unet_index,iou_c1,iou_c2,iou_c3,iou_c4,iou_c5,wfiou,"
                 "dice_c1,dice_c2,dice_c3,dice_c4,dice_c5\n";
  std::ofstream params_csv(fs::path(opts.out_dir) / "params.csv");
  params_csv << "sample_id,t_x,t_y,theta,s\n";

  std::vector<std::vector<double>> wfiou_per_unet(static_cast<std::size_t>(result.depth) + 1);

  const int bs = 16;
  for (std::size_t start = 0; start < indices.size(); start += bs) {
    const std::size_t stop = std::min(indices.size(), start + bs);
    std::vector<Sample> samples;
    std::vector<const DatasetEntry*> entries;
    for (std::size_t i = start; i < stop; ++i) {
      entries.push_back(&ds.entries[indices[i]]);
      samples.push_back(load_sample(ds, *entries.back()));
    }
    std::vector<InferenceOut<T>> outs = run_inference<T>(net, samples);
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const DatasetEntry& entry = *entries[i];
      const std::string id = sample_id_of(entry);
      const auto& fg = view_foreground_classes(entry.view);
      for (std::size_t u = 0; u < outs[i].labels.size(); ++u) {
        EvalRecord rec;
        rec.sample_id = id;
        rec.view = entry.view;
        rec.unet_index = static_cast<int>(u);
        for (int cls = 1; cls <= 5; ++cls) {
          rec.iou[static_cast<std::size_t>(cls - 1)] = iou_class(samples[i].labels, outs[i].labels[u], cls);
          rec.dice[static_cast<std::size_t>(cls - 1)] = dice_class(samples[i].labels, outs[i].labels[u], cls);
        }
        try {
          rec.wfiou = weighted_fg_iou(samples[i].labels, outs[i].labels[u], fg);
        } catch (const std::exception&) {
          rec.wfiou_valid = false;
          if (u == 0) ++result.excluded;
        }
        if (rec.wfiou_valid) wfiou_per_unet[u].push_back(rec.wfiou);
        metrics_csv << rec.sample_id << "," << view_name(rec.view) << "," << rec.unet_index;
        for (double v : rec.iou) metrics_csv << "," << fmt17(v);
        metrics_csv << "," << (rec.wfiou_valid ? fmt17(rec.wfiou) : std::string(""));
        for (double v : rec.dice) metrics_csv << "," << fmt17(v);
        metrics_csv << "\n";
        result.records.push_back(std::move(rec));
      }
      if (outs[i].has_params) {
        result.has_params = true;
        const RigidParams& p = outs[i].params;
        params_csv << id << "," << fmt17(p.tx) << "," << fmt17(p.ty) << "," << fmt17(p.theta)
                   << "," << fmt17(p.s) << "\n";
        const double pv[4] = {p.tx, p.ty, p.theta, p.s};
        const double gv[4] = {entry.gt.tx, entry.gt.ty, entry.gt.theta, entry.gt.s};
        for (int c = 0; c < 4; ++c) {
          result.pred[static_cast<std::size_t>(c)].push_back(pv[c]);
          result.gt[static_cast<std::size_t>(c)].push_back(gv[c]);
        }
      }
    }
  }

  for (auto& scores : wfiou_per_unet) {
    check(!scores.empty(), "evaluate: no valid weighted fg IoU scores");
    result.wfiou_by_unet.push_back(summarize(scores));
  }
  result.curve = success_curve(wfiou_per_unet.back());
  {
    std::size_t failures = 0;
    for (double v : wfiou_per_unet.back()) failures += static_cast<std::size_t>(v < 0.9);
    result.failure_rate_at_090 = static_cast<double>(failures) /
                                 static_cast<double>(wfiou_per_unet.back().size());
  }

  if (result.has_params) {
    for (int c = 0; c < 4; ++c) {
      const bool wrap = (c == 2);
      result.regression[static_cast<std::size_t>(c)] =
          regress_params(result.pred[static_cast<std::size_t>(c)], result.gt[static_cast<std::size_t>(c)], wrap);
      result.agreement[static_cast<std::size_t>(c)] =
          bland_altman(result.pred[static_cast<std::size_t>(c)], result.gt[static_cast<std::size_t>(c)], wrap);
    }
    std::vector<double> abs_dtheta;
    for (std::size_t i = 0; i < result.pred[2].size(); ++i)
      abs_dtheta.push_back(std::abs(wrap_angle(result.pred[2][i] - result.gt[2][i])));
    result.median_abs_wrapped_theta_error = summarize(abs_dtheta).median;
  }

  {
    std::ofstream curve_csv(fs::path(opts.out_dir) / "curve.csv");
    curve_csv << "threshold,success_rate\n";
    for (const auto& pt : result.curve.points)
      curve_csv << fmt17(pt.threshold) << "," << fmt17(pt.success) << "\n";
  }
  {
    std::ofstream sum(fs::path(opts.out_dir) / "summary.txt");
    sum << "variant=" << cfg.variant << "\n";
    sum << "test_fold=" << fold << "\n";
    sum << "images=" << indices.size() << "\n";
    sum << "excluded=" << result.excluded << "\n";
    sum << "auc=" << fmt17(result.curve.auc) << "\n";
    sum << "failure_rate_at_0.90=" << fmt17(result.failure_rate_at_090) << "\n";
    for (std::size_t u = 0; u < result.wfiou_by_unet.size(); ++u) {
      sum << "wfiou_median_u" << u << "=" << fmt17(result.wfiou_by_unet[u].median) << "\n";
      sum << "wfiou_iqr_u" << u << "=" << fmt17(result.wfiou_by_unet[u].iqr) << "\n";
    }
    if (result.has_params) {
      const char* comp[4] = {"tx", "ty", "theta", "s"};
      for (int c = 0; c < 4; ++c) {
        const auto& reg = result.regression[static_cast<std::size_t>(c)];
        const auto& ba = result.agreement[static_cast<std::size_t>(c)];
        sum << "reg_r_" << comp[c] << "=" << fmt17(reg.r) << "\n";
        sum << "reg_slope_" << comp[c] << "=" << fmt17(reg.slope) << "\n";
        sum << "reg_intercept_" << comp[c] << "=" << fmt17(reg.intercept) << "\n";
        sum << "reg_significant_" << comp[c] << "=" << (reg.significant ? 1 : 0) << "\n";
        sum << "ba_bias_" << comp[c] << "=" << fmt17(ba.bias) << "\n";
        sum << "ba_loa_low_" << comp[c] << "=" << fmt17(ba.loa_low) << "\n";
        sum << "ba_loa_high_" << comp[c] << "=" << fmt17(ba.loa_high) << "\n";
        sum << "ba_p95_" << comp[c] << "=" << fmt17(ba.p95) << "\n";
      }
      sum << "median_abs_wrapped_theta_error=" << fmt17(result.median_abs_wrapped_theta_error)
          << "\n";
    }
  }

  if (opts.write_svg) {
    SvgSeries curve;
    for (const auto& pt : result.curve.points) {
      curve.x.push_back(pt.threshold);
      curve.y.push_back(pt.success);
    }
    write_svg_line((fs::path(opts.out_dir) / "curve.svg").string(), curve,
                   "Success rate vs weighted foreground IoU threshold", "threshold",
                   "success rate");
    if (result.has_params) {
      const char* comp[4] = {"tx", "ty", "theta", "s"};
      for (int c = 0; c < 4; ++c) {
        SvgSeries pts;
        for (std::size_t i = 0; i < result.pred[static_cast<std::size_t>(c)].size(); ++i) {
          const double gt = result.gt[static_cast<std::size_t>(c)][i];
          double d = result.pred[static_cast<std::size_t>(c)][i] - gt;
          if (c == 2) d = wrap_angle(d);
          pts.x.push_back((result.pred[static_cast<std::size_t>(c)][i] + gt) / 2.0);
          pts.y.push_back(d);
        }
        const auto& ba = result.agreement[static_cast<std::size_t>(c)];
        write_svg_scatter((fs::path(opts.out_dir) / (std::string("bland_altman_") + comp[c] + ".svg")).string(),
                          pts, ba.loa_low, ba.bias, ba.loa_high,
                          std::string("Bland-Altman: ") + comp[c], "mean", "difference");
      }
    }
  }
  return result;
}

template <typename T>
void predict_impl(const PredictOptions& opts) {
  Checkpoint ckpt = load_checkpoint(opts.checkpoint_path);
  Dataset ds = load_dataset(opts.dataset_dir);
  NetworkConfig cfg = config_from_checkpoint(ckpt);
  OmegaNet<T> net;
  {
    Rng rng(1);
    net.init(cfg, rng);
  }
  net.from_checkpoint(ckpt);
  const int fold = std::stoi(ckpt.meta_value("test_fold", "0"));
  std::vector<std::size_t> indices = ds.fold_indices(fold);
  if (opts.limit >= 0 && static_cast<std::size_t>(opts.limit) < indices.size())
    indices.resize(static_cast<std::size_t>(opts.limit));
  check(!indices.empty(), "predict: nothing to predict");

  fs::create_directories(opts.out_dir);
  for (int u = 0; u <= cfg.hourglass_depth(); ++u)
    fs::create_directories(fs::path(opts.out_dir) / ("labels_pred/u" + std::to_string(u)));
  std::ofstream params_csv(fs::path(opts.out_dir) / "params.csv");
  params_csv << "sample_id,t_x,t_y,theta,s\n";

  const int bs = 16;
  for (std::size_t start = 0; start < indices.size(); start += bs) {
    const std::size_t stop = std::min(indices.size(), start + bs);
    std::vector<Sample> samples;
    std::vector<const DatasetEntry*> entries;
    for (std::size_t i = start; i < stop; ++i) {
      entries.push_back(&ds.entries[indices[i]]);
      samples.push_back(load_sample(ds, *entries.back()));
    }
    std::vector<InferenceOut<T>> outs = run_inference<T>(net, samples);
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const std::string id = sample_id_of(*entries[i]);
      for (std::size_t u = 0; u < outs[i].labels.size(); ++u)
        write_pgm8((fs::path(opts.out_dir) / ("labels_pred/u" + std::to_string(u)) / (id + ".pgm")).string(),
                   outs[i].labels[u]);
      if (outs[i].has_params) {
        const RigidParams& p = outs[i].params;
        params_csv << id << "," << fmt17(p.tx) << "," << fmt17(p.ty) << "," << fmt17(p.theta)
                   << "," << fmt17(p.s) << "\n";
      }
    }
  }
}

}  // namespace

EvalResult evaluate_command(const EvalOptions& opts) {
  return opts.use_double ? evaluate_impl<double>(opts) : evaluate_impl<float>(opts);
}

void predict_command(const PredictOptions& opts) {
  if (opts.use_double)
    predict_impl<double>(opts);
  else
    predict_impl<float>(opts);
}

}  // namespace omega
