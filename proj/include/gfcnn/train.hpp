#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "gfcnn/datapipe.hpp"
#include "gfcnn/eval.hpp"
#include "gfcnn/model.hpp"

namespace gfcnn {

struct HyperParams {
  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double dropout_rate = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double eval_accuracy = 0.0;
  bool has_eval = false;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// Pixel intensities rescaled to [0,1] before entering the network.
template <class T>
Tensor<T> image_to_tensor(const ImageWindow& im) {
  std::vector<T> v(im.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<T>(im.pixels[i]) / T(255);
  return Tensor<T>({1, im.rows, im.cols}, std::move(v));
}

// ---- Adam ----------------------------------------------------------------------

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::size_t t = 0;
};

template <class T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>>& params) {
  AdamState<T> st;
  for (const auto& p : params) {
    st.m.emplace_back(p.size(), T(0));
    st.v.emplace_back(p.size(), T(0));
  }
  return st;
}

// One bias-corrected moment update over gradients already accumulated into
// the parameter tensors. grad_scale folds in the 1/batch mean. Moment math
// runs in double for either T.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& st,
               double learning_rate, double beta1, double beta2, double eps,
               std::size_t t, double grad_scale = 1.0) {
  if (t < 1) fail("adam_step: step index must be >= 1");
  if (st.m.size() != params.size() || st.v.size() != params.size())
    fail(cat("adam_step: state covers ", st.m.size(), " tensors, got ",
             params.size()));
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (st.m[p].size() != params[p].size())
      fail(cat("adam_step: state tensor ", p, " has ", st.m[p].size(),
               " entries, parameter has ", params[p].size()));
    if (!params[p].has_grad()) continue;
    auto theta = params[p].data();
    auto g = params[p].grad();
    auto& m = st.m[p];
    auto& v = st.v[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * grad_scale;
      const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
      const double vi =
          beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) -
                                learning_rate * (mi / bc1) /
                                    (std::sqrt(vi / bc2) + eps));
    }
  }
}

// ---- loss and prediction ----------------------------------------------------------

// Mean cross-entropy over a batch, forward only. Dropout follows the model's
// mode (train mode needs a generator).
template <class T>
double batch_loss(const Model<T>& model,
                  const std::vector<std::pair<Tensor<T>, std::size_t>>& batch,
                  Rng* dropout_rng = nullptr) {
  if (batch.empty()) fail("batch_loss: empty batch");
  double acc = 0.0;
  Tape<T>* no_tape = nullptr;
  for (const auto& [image, label] : batch) {
    auto out = softmax_cross_entropy(forward(model, image, no_tape, dropout_rng),
                                     label);
    acc += static_cast<double>(out.loss.item());
  }
  return acc / static_cast<double>(batch.size());
}

template <class T>
struct Prediction {
  std::vector<double> probs;
  std::size_t cls = 0;  // argmax, ties to the smallest index
};

template <class T>
Prediction<T> predict_one(const Model<T>& model, const Tensor<T>& image) {
  Prediction<T> pred;
  pred.probs = softmax_probs(forward(model, image));
  for (std::size_t c = 1; c < pred.probs.size(); ++c)
    if (pred.probs[c] > pred.probs[pred.cls]) pred.cls = c;
  return pred;
}

// Batched inference; images are independent, so the loop is safe to run in
// parallel and results land at their own indices.
template <class T>
std::vector<Prediction<T>> predict(const Model<T>& model,
                                   const std::vector<Tensor<T>>& images) {
  if (model.training) fail("predict: model must be in eval mode");
  std::vector<Prediction<T>> out(images.size());
#pragma omp parallel for schedule(dynamic) if (images.size() > 8)
  for (std::size_t i = 0; i < images.size(); ++i)
    out[i] = predict_one(model, images[i]);
  return out;
}

template <class T>
std::vector<Prediction<T>> predict(const Model<T>& model,
                                   const WindowedDataset& ds) {
  std::vector<Tensor<T>> images;
  images.reserve(ds.images.size());
  for (const auto& im : ds.images) images.push_back(image_to_tensor<T>(im));
  return predict(model, images);
}

// ---- training loop -----------------------------------------------------------------

// Minibatch optimization of the cross-entropy objective. Each epoch reshuffles
// with a seed derived from (hp.seed, epoch); the final short batch is kept and
// its loss weighted by its true size. The model comes back in eval mode.
template <class T>
TrainHistory train(Model<T>& model, const WindowedDataset& train_set,
                   const HyperParams& hp, const WindowedDataset* eval_set = nullptr,
                   std::ostream* log = nullptr) {
  if (train_set.images.empty()) fail("train: empty dataset");
  if (hp.batch_size < 1 || hp.epochs < 1) fail("train: batch size and epochs must be >= 1");
  if (!(hp.learning_rate > 0)) fail("train: learning rate must be > 0");
  if (train_set.n_classes != model.spec.n_classes)
    fail(cat("train: dataset has ", train_set.n_classes,
             " classes, model expects ", model.spec.n_classes));
  for (const auto& im : train_set.images)
    if (im.label >= model.spec.n_classes)
      fail(cat("train: image label ", im.label, " out of range for ",
               model.spec.n_classes, " classes"));

  std::vector<Tensor<T>> images;
  std::vector<std::size_t> labels;
  images.reserve(train_set.images.size());
  for (const auto& im : train_set.images) {
    images.push_back(image_to_tensor<T>(im));
    labels.push_back(im.label);
  }
  std::vector<Tensor<T>> eval_images;
  std::vector<std::size_t> eval_labels;
  if (eval_set)
    for (const auto& im : eval_set->images) {
      eval_images.push_back(image_to_tensor<T>(im));
      eval_labels.push_back(im.label);
    }

  model.dropout_rate = hp.dropout_rate;
  auto params = model.parameters();
  AdamState<T> state = make_adam_state(params);
  Rng dropout_rng(derive_seed(hp.seed, "dropout"));

  const std::size_t n = images.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(hp.seed, "shuffle", epoch));
    shuffle(order, shuffle_rng);

    model.training = true;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += hp.batch_size) {
      const std::size_t stop = std::min(start + hp.batch_size, n);
      model.zero_grads();
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        Tape<T> tape;
        auto out = softmax_cross_entropy(
            forward(model, images[idx], &tape, &dropout_rng), labels[idx],
            &tape);
        tape.backward(out.loss);
        loss_sum += static_cast<double>(out.loss.item());
      }
      adam_step(params, state, hp.learning_rate, hp.beta1, hp.beta2,
                hp.epsilon, ++state.t, 1.0 / static_cast<double>(stop - start));
    }
    model.training = false;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(n);
    if (eval_set) {
      const auto preds = predict(model, eval_images);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].cls == eval_labels[i]) ++correct;
      rec.eval_accuracy =
          eval_images.empty()
              ? 0.0
              : static_cast<double>(correct) / static_cast<double>(preds.size());
      rec.has_eval = true;
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    history.epochs.push_back(rec);
    if (log) {
      *log << "epoch " << epoch << "/" << hp.epochs << " loss " << rec.mean_loss;
      if (rec.has_eval) *log << " eval_acc " << rec.eval_accuracy;
      *log << " (" << rec.wall_seconds << "s)\n";
    }
  }
  return history;
}

// Deterministic epoch records; timing goes to the log stream, not the file,
// so identical runs produce identical history files.
inline void save_history(const TrainHistory& h, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path, " for writing"));
  f << "gfcnn-history v1\n";
  f << "epochs " << h.epochs.size() << "\n";
  char buf[64];
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%.17g", e.mean_loss);
    f << "epoch " << e.epoch << " loss " << buf;
    if (e.has_eval) {
      std::snprintf(buf, sizeof buf, "%.17g", e.eval_accuracy);
      f << " eval_acc " << buf;
    }
    f << "\n";
  }
  if (!f) io_fail(cat("failed writing ", path));
}

}  // namespace gfcnn
