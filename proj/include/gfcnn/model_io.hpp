#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfcnn/model.hpp"

namespace gfcnn {

// Model file layout: a plain-text manifest followed by one binary blob of all
// parameters as little-endian 32-bit floats.
//
//   gfcnn-model v1
//   arch <canonical layer string>
//   input <rows> <cols>
//   classes <C>
//   seed <u64>
//   precision f32
//   init he-uniform
//   tensor <name> <byte offset> <extent>...
//   ...
//   blob <nbytes> <fnv1a64 hex>
//   <raw blob bytes>
//
// Loading rebuilds the topology from the arch line, widens the stored values
// to the requested scalar type, and leaves the model in eval mode.

namespace io_detail {

struct TensorEntry {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
};

struct ModelFile {
  std::string arch;
  std::size_t input_rows = 0, input_cols = 0, n_classes = 0;
  std::uint64_t seed = 0;
  std::vector<TensorEntry> tensors;
  std::vector<float> blob;
};

void write_model_file(const ModelFile& mf, const std::string& path);
ModelFile read_model_file(const std::string& path);

}  // namespace io_detail

template <class T>
void save_model(const Model<T>& m, const std::string& path) {
  io_detail::ModelFile mf;
  mf.arch = m.spec.to_string();
  mf.input_rows = m.spec.input_rows;
  mf.input_cols = m.spec.input_cols;
  mf.n_classes = m.spec.n_classes;
  mf.seed = m.init_seed;
  auto params = m.parameters();
  auto names = m.parameter_names();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    mf.tensors.push_back({names[i], offset, params[i].shape()});
    for (T v : params[i].data()) mf.blob.push_back(static_cast<float>(v));
    offset += params[i].size() * sizeof(float);
  }
  io_detail::write_model_file(mf, path);
}

template <class T>
Model<T> load_model(const std::string& path) {
  io_detail::ModelFile mf = io_detail::read_model_file(path);
  ArchSpec spec = parse_arch(mf.arch);
  spec.input_rows = mf.input_rows;
  spec.input_cols = mf.input_cols;
  spec.n_classes = mf.n_classes;
  Model<T> m = build_model<T>(spec, mf.seed);
  m.training = false;
  auto params = m.parameters();
  auto names = m.parameter_names();
  if (params.size() != mf.tensors.size())
    io_fail(cat("model file ", path, ": expected ", params.size(),
                " tensors, manifest lists ", mf.tensors.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = mf.tensors[i];
    if (e.name != names[i])
      io_fail(cat("model file ", path, ": tensor ", i, " named '", e.name,
                  "', expected '", names[i], "'"));
    if (e.shape != params[i].shape())
      io_fail(cat("model file ", path, ": tensor '", e.name, "' has shape ",
                  shape_str(e.shape), ", expected ",
                  shape_str(params[i].shape())));
    if (e.offset % sizeof(float) != 0 ||
        e.offset / sizeof(float) + params[i].size() > mf.blob.size())
      io_fail(cat("model file ", path, ": tensor '", e.name,
                  "' falls outside the blob"));
    const float* src = mf.blob.data() + e.offset / sizeof(float);
    auto dst = params[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j)
      dst[j] = static_cast<T>(src[j]);
  }
  return m;
}

}  // namespace gfcnn
