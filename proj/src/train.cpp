#include "omega/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "omega/metrics.hpp"
#include "omega/preprocess.hpp"

namespace fs = std::filesystem;

namespace omega {

namespace {

template <typename T>
Tensor<T> batch_images(const std::vector<PreparedSample<T>>& batch) {
  const int n = static_cast<int>(batch.size());
  const int h = batch[0].image.dim(2), w = batch[0].image.dim(3);
  Tensor<T> out({n, 1, h, w});
  for (int i = 0; i < n; ++i)
    std::copy(batch[static_cast<std::size_t>(i)].image.data.begin(),
              batch[static_cast<std::size_t>(i)].image.data.end(),
              out.data.begin() + static_cast<std::size_t>(i) * h * w);
  return out;
}

template <typename T>
Tensor<T> batch_onehots(const std::vector<PreparedSample<T>>& batch, bool canonical) {
  const int n = static_cast<int>(batch.size());
  const Tensor<T>& first = canonical ? batch[0].canonical_onehot : batch[0].initial_onehot;
  const int k = first.dim(1), h = first.dim(2), w = first.dim(3);
  Tensor<T> out({n, k, h, w});
  const std::size_t per = static_cast<std::size_t>(k) * h * w;
  for (int i = 0; i < n; ++i) {
    const Tensor<T>& src =
        canonical ? batch[static_cast<std::size_t>(i)].canonical_onehot
                  : batch[static_cast<std::size_t>(i)].initial_onehot;
    std::copy(src.data.begin(), src.data.end(), out.data.begin() + static_cast<std::size_t>(i) * per);
  }
  return out;
}

template <typename T>
Tensor<T> batch_params(const std::vector<PreparedSample<T>>& batch) {
  const int n = static_cast<int>(batch.size());
  Tensor<T> out({n, 4});
  for (int i = 0; i < n; ++i) {
    const RigidParams& p = batch[static_cast<std::size_t>(i)].gt;
    out.at(i, 0) = static_cast<T>(p.tx);
    out.at(i, 1) = static_cast<T>(p.ty);
    out.at(i, 2) = static_cast<T>(p.theta);
    out.at(i, 3) = static_cast<T>(p.s);
  }
  return out;
}

// median weighted foreground IoU of the final U-Net over one fold
template <typename T>
double validation_wfiou(OmegaNet<T>& net, const Dataset& ds,
                        const std::vector<std::size_t>& indices) {
  const int size = net.config.image_size;
  const int depth = net.config.hourglass_depth();
  std::vector<double> scores;
  const int bs = 16;
  for (std::size_t start = 0; start < indices.size(); start += bs) {
    const std::size_t stop = std::min(indices.size(), start + bs);
    std::vector<Sample> samples;
    for (std::size_t i = start; i < stop; ++i)
      samples.push_back(load_sample(ds, ds.entries[indices[i]]));
    const int n = static_cast<int>(samples.size());
    Tensor<T> images({n, 1, size, size});
    for (int i = 0; i < n; ++i) {
      PreprocessResult pre = preprocess(samples[static_cast<std::size_t>(i)].image, size);
      const Tensor<T> img = pre.image.template cast<T>();
      std::copy(img.data.begin(), img.data.end(),
                images.data.begin() + static_cast<std::size_t>(i) * size * size);
    }
    Graph<T> g(Graph<T>::Mode::kInfer, false);
    PlacedVars<T> placed = place_params(g, net.refs, false);
    ForwardTrace<T> trace = omega_forward<T>(g, net, placed, images, nullptr);
    for (int i = 0; i < n; ++i) {
      Tensor<unsigned char> pred;
      if (depth == 0) {
        pred = argmax_labels(g.value(trace.initial.probs), i);
      } else {
        pred = argmax_labels(g.value(trace.hourglass.back().probs), i);
        RigidParams pp;
        const Tensor<T>& pv = g.value(trace.params_pred);
        pp.tx = pv.at(i, 0);
        pp.ty = pv.at(i, 1);
        pp.theta = pv.at(i, 2);
        pp.s = pv.at(i, 3);
        Mat3 m = compose_similarity(pp);
        if (std::abs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) < 1e-24) {
          scores.push_back(0.0);  // degenerate predicted scale, count as failure
          continue;
        }
        pred = warp_labels_nearest(pred, mat_inverse_similarity(m), size, size);
      }
      try {
        scores.push_back(weighted_fg_iou(samples[static_cast<std::size_t>(i)].labels, pred,
                                         view_foreground_classes(samples[static_cast<std::size_t>(i)].view)));
      } catch (const std::exception&) {
        // ground truth without foreground is excluded
      }
    }
  }
  if (scores.empty()) return 0.0;
  return summarize(scores).median;
}

std::string fold_list_string(const Dataset& ds, int test_fold) {
  std::string out;
  for (int f = 0; f < ds.num_folds; ++f) {
    if (f == test_fold) continue;
    if (!out.empty()) out += ",";
    out += std::to_string(f);
  }
  return out;
}

template <typename T>
Checkpoint optimizer_checkpoint(const OmegaNet<T>& net, const AdamState<T>& state, int next_epoch) {
  Checkpoint ckpt;
  ckpt.set_meta("step", std::to_string(state.step));
  ckpt.set_meta("next_epoch", std::to_string(next_epoch));
  for (std::size_t i = 0; i < net.refs.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m." + net.refs[i].name, state.m[i].template cast<float>());
    ckpt.tensors.emplace_back("adam.v." + net.refs[i].name, state.v[i].template cast<float>());
  }
  return ckpt;
}

template <typename T>
int restore_optimizer(OmegaNet<T>& net, AdamState<T>& state, const Checkpoint& ckpt) {
  std::vector<ParamRef<T>> refs = net.refs;
  state.init(refs);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Tensor<float>* m = ckpt.find("adam.m." + refs[i].name);
    const Tensor<float>* v = ckpt.find("adam.v." + refs[i].name);
    check(m && v, "resume: optimizer state missing " + refs[i].name);
    state.m[i] = m->template cast<T>();
    state.v[i] = v->template cast<T>();
  }
  state.step = std::stol(ckpt.meta_value("step", "0"));
  return std::stoi(ckpt.meta_value("next_epoch", "0"));
}

template <typename T>
FoldArtifacts train_one_fold(const TrainOptions& opts, const Dataset& ds, int test_fold) {
  const int size = ds.image_size;
  check(size == opts.net.image_size, "train: dataset image size does not match config");
  const int num_classes = opts.net.unet.num_classes;
  const int depth = opts.net.hourglass_depth();
  const std::vector<std::size_t> train_idx = ds.complement_indices(test_fold);
  const std::vector<std::size_t> val_idx = ds.fold_indices(test_fold);
  check(!train_idx.empty() && !val_idx.empty(), "train: empty fold split");

  OmegaNet<T> net;
  {
    Rng init_rng(stream_seed(opts.seed, "init", static_cast<std::uint64_t>(test_fold)));
    net.init(opts.net, init_rng);
  }
  AdamState<T> adam;
  adam.init(net.refs);
  LrSchedule sched;

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  const std::string tag = "fold" + std::to_string(test_fold);
  const std::string final_path = (out / ("ckpt_" + tag + ".ckpt")).string();
  const std::string last_path = (out / ("ckpt_" + tag + "_last.ckpt")).string();
  const std::string opt_path = (out / ("ckpt_" + tag + "_opt.ckpt")).string();
  const std::string log_path = (out / ("train_log_" + tag + ".csv")).string();

  int epoch_start = 0;
  if (opts.resume && fs::exists(last_path) && fs::exists(opt_path)) {
    net.from_checkpoint(load_checkpoint(last_path));
    epoch_start = restore_optimizer<T>(net, adam, load_checkpoint(opt_path));
  }

  std::ofstream log(log_path, epoch_start > 0 ? std::ios::app : std::ios::trunc);
  check(log.good(), "train: cannot write " + log_path);
  if (epoch_start == 0)
    log << "epoch,lr,L_SU,L_tx,L_ty,L_theta,L_s,L_It,L_Itheta,L_Is,L_SH_1,L_SH_2,L_SH_3,"
           "L_total,val_wfiou_median\n";

  for (int epoch = epoch_start; epoch < opts.epochs; ++epoch) {
    const double lr = sched.at(epoch);
    std::vector<std::size_t> order = train_idx;
    {
      Rng shuffle_rng(stream_seed(opts.seed, "shuffle", static_cast<std::uint64_t>(test_fold),
                                  static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    }

    LossBreakdown mean{};
    mean.l_sh.assign(static_cast<std::size_t>(depth), 0.0);
    long batches = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      const int n = static_cast<int>(stop - start);
      std::vector<PreparedSample<T>> prepared(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < n; ++i) {
        const std::size_t row = order[start + static_cast<std::size_t>(i)];
        Sample s = load_sample(ds, ds.entries[row]);
        Rng aug_rng(stream_seed(opts.seed, "augment", static_cast<std::uint64_t>(test_fold),
                                static_cast<std::uint64_t>(epoch), row));
        prepared[static_cast<std::size_t>(i)] = prepare_training_sample<T>(
            s, aug_rng, opts.aug, size, num_classes, depth > 0);
      }

      TrainTargets<T> targets;
      targets.initial_onehot = batch_onehots(prepared, false);
      targets.canonical_onehot = depth > 0 ? batch_onehots(prepared, true) : Tensor<T>();
      targets.gt_params = batch_params(prepared);
      Tensor<T> images = batch_images(prepared);

      Graph<T> g(Graph<T>::Mode::kTrain, true);
      PlacedVars<T> placed = place_params(g, net.refs, true);
      ForwardTrace<T> trace = omega_forward<T>(g, net, placed, images, &targets);
      if (!std::isfinite(trace.losses.total))
        throw std::runtime_error("train: NaN loss at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(batches));
      g.backward(trace.total_loss);

      std::vector<const Tensor<T>*> grads;
      grads.reserve(net.refs.size());
      for (const Var v : placed) grads.push_back(&g.grad(v));
      try {
        adam_step<T>(net.refs, grads, adam, lr, opts.weight_decay);
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(batches));
      }

      mean.l_su += trace.losses.l_su;
      mean.l_tx += trace.losses.l_tx;
      mean.l_ty += trace.losses.l_ty;
      mean.l_theta += trace.losses.l_theta;
      mean.l_s += trace.losses.l_s;
      mean.l_it += trace.losses.l_it;
      mean.l_itheta += trace.losses.l_itheta;
      mean.l_is += trace.losses.l_is;
      for (int d = 0; d < depth; ++d) mean.l_sh[static_cast<std::size_t>(d)] += trace.losses.l_sh[static_cast<std::size_t>(d)];
      mean.total += trace.losses.total;
      ++batches;
    }

    const double inv = 1.0 / static_cast<double>(batches);
    const double val = validation_wfiou<T>(net, ds, val_idx);

    std::ostringstream row;
    row << epoch << "," << fmt17(lr) << "," << fmt17(mean.l_su * inv) << ",";
    if (depth > 0)
      row << fmt17(mean.l_tx * inv) << "," << fmt17(mean.l_ty * inv) << ","
          << fmt17(mean.l_theta * inv) << "," << fmt17(mean.l_s * inv) << ","
          << fmt17(mean.l_it * inv) << "," << fmt17(mean.l_itheta * inv) << ","
          << fmt17(mean.l_is * inv) << ",";
    else
      row << ",,,,,,,";  // transformer columns stay empty for variant A
    for (int d = 0; d < 3; ++d)
      row << (d < depth ? fmt17(mean.l_sh[static_cast<std::size_t>(d)] * inv) : "") << ",";
    row << fmt17(mean.total * inv) << "," << fmt17(val);
    log << row.str() << "\n";
    log.flush();

    Checkpoint ck = net.to_checkpoint();
    ck.set_meta("test_fold", std::to_string(test_fold));
    ck.set_meta("train_folds", fold_list_string(ds, test_fold));
    ck.set_meta("seed", std::to_string(opts.seed));
    ck.set_meta("epochs_done", std::to_string(epoch + 1));
    save_checkpoint(last_path, ck);
    save_checkpoint(opt_path, optimizer_checkpoint<T>(net, adam, epoch + 1));
  }

  Checkpoint final_ck = net.to_checkpoint();
  final_ck.set_meta("test_fold", std::to_string(test_fold));
  final_ck.set_meta("train_folds", fold_list_string(ds, test_fold));
  final_ck.set_meta("seed", std::to_string(opts.seed));
  final_ck.set_meta("epochs_done", std::to_string(opts.epochs));
  save_checkpoint(final_path, final_ck);
  return FoldArtifacts{test_fold, final_path, log_path};
}

}  // namespace

template <typename T>
PreparedSample<T> prepare_training_sample(const Sample& s, Rng& aug_rng,
                                          const AugmentRanges& aug, int image_size,
                                          int num_classes, bool want_canonical) {
  Sample a = augment(s, aug_rng, aug);
  PreparedSample<T> out;
  PreprocessResult pre = preprocess(a.image, image_size);
  Tensor<T> img({1, 1, image_size, image_size});
  for (std::size_t i = 0; i < pre.image.numel(); ++i)
    img.data[i] = static_cast<T>(pre.image.data[i]);
  out.image = std::move(img);
  out.initial_onehot = onehot_labels<T>(a.labels, num_classes);
  if (want_canonical) {
    Tensor<unsigned char> canon =
        warp_labels_nearest(a.labels, compose_similarity(a.gt), image_size, image_size);
    out.canonical_onehot = onehot_labels<T>(canon, num_classes);
  }
  out.gt = a.gt;
  return out;
}

std::vector<FoldArtifacts> train_command(const TrainOptions& opts) {
  Dataset ds = load_dataset(opts.dataset_dir);
  std::vector<FoldArtifacts> results;
  for (int f = 0; f < ds.num_folds; ++f) {
    if (opts.only_fold >= 0 && f != opts.only_fold) continue;
    if (opts.use_double)
      results.push_back(train_one_fold<double>(opts, ds, f));
    else
      results.push_back(train_one_fold<float>(opts, ds, f));
  }
  return results;
}

template PreparedSample<float> prepare_training_sample<float>(const Sample&, Rng&,
                                                              const AugmentRanges&, int, int, bool);
template PreparedSample<double> prepare_training_sample<double>(const Sample&, Rng&,
                                                                const AugmentRanges&, int, int, bool);

}  // namespace omega
