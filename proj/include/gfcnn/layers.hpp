#pragma once

#include "gfcnn/tensor.hpp"

// Layer-level forward definitions: 3x3 valid convolution + ReLU,
// non-overlapping max pooling, dense layers, inverted dropout. All of them
// compose the tape primitives from tensor.hpp, so backward comes for free.
namespace gfcnn {

template <class T>
struct ConvLayer {
  Tensor<T> kernels;  // (out_channels, in_channels, 3, 3)
  Tensor<T> bias;     // (out_channels)
};

struct PoolWindow {
  std::size_t rows = 1;  // factor along the variable axis
  std::size_t cols = 1;  // factor along the time axis
};

template <class T>
struct DenseLayer {
  Tensor<T> weights;  // (out, in), output-major
  Tensor<T> bias;     // (out)
  bool relu_activation = true;
};

template <class T>
Tensor<T> conv_forward(const ConvLayer<T>& layer, const Tensor<T>& x,
                       Tape<T>* tape = nullptr) {
  if (x.rank() != 3)
    fail(cat("conv: input must be rank-3, got ", shape_str(x.shape())));
  if (x.shape()[1] < 3 || x.shape()[2] < 3)
    fail(cat("conv: spatial extents ", x.shape()[1], "x", x.shape()[2],
             " too small for a 3x3 kernel"));
  return relu(conv2d(x, layer.kernels, layer.bias, tape), tape);
}

template <class T>
Tensor<T> pool_forward(const PoolWindow& window, const Tensor<T>& x,
                       Tape<T>* tape = nullptr) {
  return maxpool2d(x, window.rows, window.cols, tape);
}

template <class T>
Tensor<T> dense_forward(const DenseLayer<T>& layer, const Tensor<T>& x,
                        Tape<T>* tape = nullptr) {
  Tensor<T> y = affine(x, layer.weights, layer.bias, tape);
  return layer.relu_activation ? relu(y, tape) : y;
}

// Eval mode is exactly the identity; train mode zeroes each element with
// probability rate and scales survivors by 1/(1-rate).
template <class T>
Tensor<T> dropout_forward(double rate, bool training, const Tensor<T>& x,
                          Rng* rng, Tape<T>* tape = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0))
    fail(cat("dropout: rate must lie in [0,1), got ", rate));
  if (!training || rate == 0.0) return x;
  if (!rng) fail("dropout: training mode requires a generator");
  Tensor<T> mask = make_dropout_mask<T>(x.shape(), rate, *rng);
  return mul(x, mask, tape);
}

}  // namespace gfcnn
