#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gfcnn {

// One token of an architecture string:
//   C(n)    convolution with n 3x3 kernels
//   P(n)    n x n max pooling
//   P(n,m)  pooling by factor n along the time axis, m along the variable axis
//   G(n)    global-feature branch of dimension n (single dense layer over the
//           vectorized input image)
//   F(n)    fully-connected layer with n neurons; a trailing * adds dropout
// The final classification layer is implicit and never written.
struct LayerSpec {
  enum class Kind { Conv, Pool, GlobalFeature, FullyConnected };
  Kind kind;
  std::size_t a = 0;  // Conv: kernels; Pool: window rows; G: dim; F: neurons
  std::size_t b = 0;  // Pool: window cols
  bool dropout = false;

  std::string token() const;
};

struct ArchSpec {
  std::vector<LayerSpec> layers;
  std::size_t input_rows = 50;  // n process variables
  std::size_t input_cols = 20;  // w window width
  std::size_t n_classes = 20;

  std::string to_string() const;  // canonical layer string, head omitted
};

// Parses the dash-separated layer string. Throws std::invalid_argument with
// the 1-based token position for unknown tokens, malformed arity, a G after
// an F, more than one G, a dropout marker outside F, or a string with no F.
ArchSpec parse_arch(const std::string& text);

struct TraceEntry {
  std::string label;               // token, "input", "flatten", or "F(C) head"
  std::vector<std::size_t> shape;  // output shape after this stage
};

struct ShapeTrace {
  std::vector<TraceEntry> entries;
  std::size_t flat_cnn = 0;  // flattened width of the final feature map
  std::size_t mlp_dim = 0;   // global-feature dimension, 0 when absent
  std::size_t first_fc_in = 0;
};

// Walks the spec, validating spatial extents along the way. Throws naming
// the offending layer on spatial underflow, an oversized pool window, or a
// spatial layer appearing after G or the first F.
ShapeTrace trace_shapes(const ArchSpec& spec);

struct ParamCount {
  std::size_t total = 0;
  std::size_t conv = 0;  // all convolution kernels and biases
  std::size_t mlp = 0;   // global-feature weights and bias
  std::size_t fc = 0;    // all dense weights and biases, head included
};

ParamCount count_params(const ArchSpec& spec);

}  // namespace gfcnn
