#include "gfcnn/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gfcnn::io_detail {

namespace {

void put_f32_le(std::string& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32_le(const char* p) {
  const auto b = [&](int i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(p[i]));
  };
  const std::uint32_t u = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace

void write_model_file(const ModelFile& mf, const std::string& path) {
  std::string blob;
  blob.reserve(mf.blob.size() * 4);
  for (float v : mf.blob) put_f32_le(blob, v);
  const std::uint64_t checksum = fnv1a64(blob.data(), blob.size());

  std::ostringstream head;
  head << "gfcnn-model v1\n";
  head << "arch " << mf.arch << "\n";
  head << "input " << mf.input_rows << " " << mf.input_cols << "\n";
  head << "classes " << mf.n_classes << "\n";
  head << "seed " << mf.seed << "\n";
  head << "precision f32\n";
  head << "init he-uniform\n";
  for (const auto& t : mf.tensors) {
    head << "tensor " << t.name << " " << t.offset;
    for (auto e : t.shape) head << " " << e;
    head << "\n";
  }
  head << "blob " << blob.size() << " " << hex64(checksum) << "\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path, " for writing"));
  f << head.str();
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) io_fail(cat("failed writing ", path));
}

ModelFile read_model_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path));
  ModelFile mf;
  std::string line;
  if (!std::getline(f, line) || line != "gfcnn-model v1")
    io_fail(cat(path, ": not a gfcnn model file"));
  std::size_t blob_bytes = 0;
  std::string checksum_hex;
  bool have_blob_line = false;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "arch") {
      std::string rest;
      std::getline(ls, rest);
      const std::size_t b = rest.find_first_not_of(' ');
      mf.arch = b == std::string::npos ? "" : rest.substr(b);
    } else if (key == "input") {
      ls >> mf.input_rows >> mf.input_cols;
    } else if (key == "classes") {
      ls >> mf.n_classes;
    } else if (key == "seed") {
      ls >> mf.seed;
    } else if (key == "precision" || key == "init") {
      // informational
    } else if (key == "tensor") {
      TensorEntry e;
      ls >> e.name >> e.offset;
      std::size_t d;
      while (ls >> d) e.shape.push_back(d);
      if (e.name.empty() || e.shape.empty())
        io_fail(cat(path, ": malformed tensor line '", line, "'"));
      mf.tensors.push_back(std::move(e));
    } else if (key == "blob") {
      ls >> blob_bytes >> checksum_hex;
      have_blob_line = true;
      break;
    } else {
      io_fail(cat(path, ": unknown manifest line '", line, "'"));
    }
    if (ls.fail() && !ls.eof()) io_fail(cat(path, ": malformed line '", line, "'"));
  }
  if (!have_blob_line) io_fail(cat(path, ": missing blob section"));
  if (blob_bytes % 4 != 0) io_fail(cat(path, ": blob size not a multiple of 4"));
  std::string raw(blob_bytes, '\0');
  f.read(raw.data(), static_cast<std::streamsize>(blob_bytes));
  if (static_cast<std::size_t>(f.gcount()) != blob_bytes)
    io_fail(cat(path, ": blob truncated (expected ", blob_bytes, " bytes, got ",
                f.gcount(), ")"));
  if (hex64(fnv1a64(raw.data(), raw.size())) != checksum_hex)
    io_fail(cat(path, ": blob checksum mismatch"));
  mf.blob.resize(blob_bytes / 4);
  for (std::size_t i = 0; i < mf.blob.size(); ++i)
    mf.blob[i] = get_f32_le(raw.data() + i * 4);
  return mf;
}

}  // namespace gfcnn::io_detail
