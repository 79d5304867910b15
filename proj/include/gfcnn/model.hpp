#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "gfcnn/arch.hpp"
#include "gfcnn/layers.hpp"

namespace gfcnn {

// Instantiated network. Parameters fall into three groups: the convolution
// stack, the optional global-feature branch (a single dense layer over the
// vectorized input image), and the dense stack including the implicit
// classification head.
template <class T>
struct Model {
  ArchSpec spec;
  ShapeTrace trace;

  std::vector<ConvLayer<T>> conv_layers;        // in spec order
  std::optional<DenseLayer<T>> global_branch;   // G(n)
  std::vector<DenseLayer<T>> fc_layers;         // written F layers + head
  std::vector<bool> fc_dropout;                 // per fc layer, head = false

  bool training = false;
  double dropout_rate = 0.5;
  std::uint64_t init_seed = 0;

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& c : conv_layers) {
      out.push_back(c.kernels);
      out.push_back(c.bias);
    }
    if (global_branch) {
      out.push_back(global_branch->weights);
      out.push_back(global_branch->bias);
    }
    for (const auto& f : fc_layers) {
      out.push_back(f.weights);
      out.push_back(f.bias);
    }
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
      out.push_back(cat("conv", i, ".kernels"));
      out.push_back(cat("conv", i, ".bias"));
    }
    if (global_branch) {
      out.push_back("mlp.weights");
      out.push_back("mlp.bias");
    }
    for (std::size_t i = 0; i + 1 < fc_layers.size(); ++i) {
      out.push_back(cat("fc", i, ".weights"));
      out.push_back(cat("fc", i, ".bias"));
    }
    out.push_back("head.weights");
    out.push_back("head.bias");
    return out;
  }

  void zero_grads() const {
    for (const auto& p : parameters()) p.zero_grad();
  }
};

// Parameter totals of a built model, from the tensors themselves.
template <class T>
ParamCount count_params(const Model<T>& m) {
  ParamCount pc;
  for (const auto& c : m.conv_layers) pc.conv += c.kernels.size() + c.bias.size();
  if (m.global_branch)
    pc.mlp = m.global_branch->weights.size() + m.global_branch->bias.size();
  for (const auto& f : m.fc_layers) pc.fc += f.weights.size() + f.bias.size();
  pc.total = pc.conv + pc.mlp + pc.fc;
  return pc;
}

namespace detail {

// He-uniform fan-in initialization; draws in double so f32 and f64 builds of
// the same seed hold the same values up to rounding.
template <class T>
Tensor<T> he_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>(shape, std::move(v));
}

}  // namespace detail

template <class T>
Model<T> build_model(const ArchSpec& spec, std::uint64_t seed) {
  Model<T> m;
  m.spec = spec;
  m.trace = trace_shapes(spec);  // rejects invalid shapes, names the layer
  m.init_seed = seed;

  Rng rng(derive_seed(seed, "init"));
  std::size_t ch = 1;
  std::size_t width = m.trace.first_fc_in;
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        ConvLayer<T> c{detail::he_uniform<T>({l.a, ch, 3, 3}, ch * 9, rng),
                       Tensor<T>::zeros({l.a})};
        m.conv_layers.push_back(c);
        ch = l.a;
        break;
      }
      case LayerSpec::Kind::Pool:
        break;
      case LayerSpec::Kind::GlobalFeature: {
        const std::size_t in = spec.input_rows * spec.input_cols;
        m.global_branch =
            DenseLayer<T>{detail::he_uniform<T>({l.a, in}, in, rng),
                          Tensor<T>::zeros({l.a}), true};
        break;
      }
      case LayerSpec::Kind::FullyConnected: {
        m.fc_layers.push_back(
            DenseLayer<T>{detail::he_uniform<T>({l.a, width}, width, rng),
                          Tensor<T>::zeros({l.a}), true});
        m.fc_dropout.push_back(l.dropout);
        width = l.a;
        break;
      }
    }
  }
  // implicit classification head: linear, softmax lives in the loss
  m.fc_layers.push_back(
      DenseLayer<T>{detail::he_uniform<T>({spec.n_classes, width}, width, rng),
                    Tensor<T>::zeros({spec.n_classes}), false});
  m.fc_dropout.push_back(false);

  for (const auto& p : m.parameters()) p.set_requires_grad(true);
  return m;
}

// Forward pass to logits. The image enters as (1, n, w); the global-feature
// branch consumes the same image, vectorized. dropout_rng is only touched in
// training mode on layers carrying the dropout marker.
template <class T>
Tensor<T> forward(const Model<T>& m, const Tensor<T>& image,
                  Tape<T>* tape = nullptr, Rng* dropout_rng = nullptr) {
  const Shape want{1, m.spec.input_rows, m.spec.input_cols};
  if (image.shape() != want)
    fail(cat("forward: image shape ", shape_str(image.shape()),
             " does not match model input ", shape_str(want)));

  Tensor<T> h = image;
  std::size_t conv_i = 0;
  std::size_t fc_i = 0;
  bool flat = false;
  for (const LayerSpec& l : m.spec.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Conv:
        h = conv_forward(m.conv_layers[conv_i++], h, tape);
        break;
      case LayerSpec::Kind::Pool:
        h = pool_forward(PoolWindow{l.a, l.b}, h, tape);
        break;
      case LayerSpec::Kind::GlobalFeature:
        break;  // joins at the first F
      case LayerSpec::Kind::FullyConnected: {
        if (!flat) {
          h = flatten(h, tape);
          if (m.global_branch) {
            Tensor<T> g =
                dense_forward(*m.global_branch, flatten(image, tape), tape);
            h = concat(h, g, tape);
          }
          flat = true;
        }
        h = dense_forward(m.fc_layers[fc_i], h, tape);
        if (m.fc_dropout[fc_i] && m.training)
          h = dropout_forward(m.dropout_rate, true, h, dropout_rng, tape);
        ++fc_i;
        break;
      }
    }
  }
  return dense_forward(m.fc_layers.back(), h, tape);
}

// Max relative error between analytic and central-difference gradients over
// a sampled subset of parameter entries. Dropout is forced off; the model is
// left in its original mode.
template <class T>
double grad_check(Model<T>& m, const Tensor<T>& input, std::size_t label,
                  double eps, std::size_t max_entries = 200,
                  std::uint64_t seed = 0) {
  if (!(eps > 0)) fail(cat("grad_check: eps must be > 0, got ", eps));
  const bool was_training = m.training;
  m.training = false;

  m.zero_grads();
  {
    Tape<T> tape;
    auto out = softmax_cross_entropy(forward(m, input, &tape), label, &tape);
    tape.backward(out.loss);
  }

  auto params = m.parameters();
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();

  std::vector<std::size_t> picks;
  if (max_entries >= total) {
    picks.resize(total);
    for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  } else {
    Rng rng(derive_seed(seed, "grad-check"));
    std::unordered_set<std::size_t> seen;
    while (picks.size() < max_entries) {
      const auto i = static_cast<std::size_t>(rng.below(total));
      if (seen.insert(i).second) picks.push_back(i);
    }
  }

  auto loss_at = [&]() {
    auto out = softmax_cross_entropy(forward(m, input), label);
    return static_cast<double>(out.loss.item());
  };

  double worst = 0.0;
  for (std::size_t flat_idx : picks) {
    std::size_t pi = 0, off = flat_idx;
    while (off >= params[pi].size()) {
      off -= params[pi].size();
      ++pi;
    }
    auto d = params[pi].data();
    const T saved = d[off];
    d[off] = saved + static_cast<T>(eps);
    const double lp = loss_at();
    d[off] = saved - static_cast<T>(eps);
    const double lm = loss_at();
    d[off] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double analytic = static_cast<double>(params[pi].grad()[off]);
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  m.training = was_training;
  return worst;
}

}  // namespace gfcnn
