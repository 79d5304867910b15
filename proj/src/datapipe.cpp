#include "gfcnn/datapipe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "gfcnn/common.hpp"
#include "gfcnn/rng.hpp"

namespace gfcnn {

NormStats compute_norm_stats(const SeriesSet& train) {
  if (train.runs.empty()) fail("norm stats: empty series set");
  const std::size_t n = train.n_vars;
  const std::size_t m = train.total_samples();
  if (m < 2) fail(cat("norm stats: need at least 2 samples, got ", m));

  NormStats st;
  st.mean.assign(n, 0.0);
  st.stddev.assign(n, 0.0);
  for (const auto& r : train.runs)
    for (std::size_t s = 0; s < r.n_samples; ++s)
      for (std::size_t i = 0; i < n; ++i) st.mean[i] += r.values[s * n + i];
  for (auto& v : st.mean) v /= static_cast<double>(m);
  for (const auto& r : train.runs)
    for (std::size_t s = 0; s < r.n_samples; ++s)
      for (std::size_t i = 0; i < n; ++i) {
        const double d = r.values[s * n + i] - st.mean[i];
        st.stddev[i] += d * d;
      }
  for (std::size_t i = 0; i < n; ++i) {
    st.stddev[i] = std::sqrt(st.stddev[i] / static_cast<double>(m));
    if (st.stddev[i] == 0.0) {
      st.stddev[i] = 1.0;
      st.degenerate.push_back(i);
    }
  }
  return st;
}

SeriesSet normalize(const SeriesSet& series, const NormStats& stats) {
  if (stats.mean.size() != series.n_vars || stats.stddev.size() != series.n_vars)
    fail(cat("normalize: stats cover ", stats.mean.size(),
             " variables, series has ", series.n_vars));
  SeriesSet out = series;
  const std::size_t n = series.n_vars;
  for (auto& r : out.runs)
    for (std::size_t s = 0; s < r.n_samples; ++s)
      for (std::size_t i = 0; i < n; ++i)
        r.values[s * n + i] =
            (r.values[s * n + i] - stats.mean[i]) / stats.stddev[i];
  return out;
}

std::vector<Window> window_series(const SeriesSet& series, std::size_t w) {
  if (w < 1) fail("window: width must be >= 1");
  const std::size_t n = series.n_vars;
  std::vector<Window> out;
  for (const auto& r : series.runs) {
    const std::size_t count = r.n_samples / w;  // remainder samples dropped
    for (std::size_t k = 0; k < count; ++k) {
      Window win;
      win.label = r.label;
      win.run_id = r.run_id;
      win.index = k;
      win.rows = n;
      win.cols = w;
      win.values.resize(n * w);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j)
          win.values[i * w + j] = r.values[(k * w + j) * n + i];
      out.push_back(std::move(win));
    }
  }
  return out;
}

ImageWindow window_to_image(const Window& window) {
  ImageWindow img;
  if (window.label < 1)
    fail(cat("window_to_image: fault label must be >= 1, got ", window.label));
  img.label = static_cast<std::uint16_t>(window.label - 1);
  img.run_id = window.run_id;
  img.index = static_cast<std::uint32_t>(window.index);
  img.rows = window.rows;
  img.cols = window.cols;
  img.pixels.resize(window.values.size());
  double mn = window.values[0], mx = window.values[0];
  for (double v : window.values) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  if (mx == mn) return img;  // constant window: all zeros
  const double scale = 255.0 / (mx - mn);
  for (std::size_t i = 0; i < window.values.size(); ++i) {
    // std::round is round-half-away-from-zero
    double p = std::round((window.values[i] - mn) * scale);
    if (p < 0.0) p = 0.0;
    if (p > 255.0) p = 255.0;
    img.pixels[i] = static_cast<std::uint8_t>(p);
  }
  return img;
}

WindowedDataset make_dataset(const SeriesSet& normalized, std::size_t w) {
  std::vector<Window> windows = window_series(normalized, w);
  std::sort(windows.begin(), windows.end(), [](const Window& a, const Window& b) {
    if (a.label != b.label) return a.label < b.label;
    if (a.run_id != b.run_id) return a.run_id < b.run_id;
    return a.index < b.index;
  });
  WindowedDataset ds;
  ds.n = normalized.n_vars;
  ds.w = w;
  ds.n_classes = static_cast<std::size_t>(std::max(normalized.max_label(), 0));
  ds.images.resize(windows.size());
#pragma omp parallel for schedule(static) if (windows.size() > 64)
  for (std::size_t i = 0; i < windows.size(); ++i)
    ds.images[i] = window_to_image(windows[i]);
  return ds;
}

// ---- CSV -----------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    const std::size_t b = c.find_first_not_of(" \t");
    const std::size_t e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? "" : c.substr(b, e - b + 1);
  }
  return cells;
}

double parse_double(const std::string& cell, std::size_t row, const std::string& col) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size())
    io_fail(cat("csv row ", row, ": non-numeric value '", cell, "' in column ", col));
  return v;
}

}  // namespace

SeriesSet load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream f(path);
  if (!f) io_fail(cat("cannot open ", path));
  std::string line;
  if (!std::getline(f, line)) io_fail(cat(path, ": missing header row"));
  const std::vector<std::string> header = split_csv_line(line);

  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    io_fail(cat(path, ": missing column '", name, "'"));
  };
  const std::size_t label_idx = col_index(schema.label_col);
  const std::size_t run_idx = col_index(schema.run_col);

  SeriesSet set;
  std::vector<std::size_t> var_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == label_idx || i == run_idx) continue;
    if (std::find(schema.drop_cols.begin(), schema.drop_cols.end(), header[i]) !=
        schema.drop_cols.end())
      continue;
    var_cols.push_back(i);
    set.var_names.push_back(header[i]);
  }
  if (var_cols.empty()) io_fail(cat(path, ": no variable columns left"));
  set.n_vars = var_cols.size();

  // group rows by (label, run) preserving first-appearance order, so shuffled
  // run blocks are reassembled
  std::map<std::pair<int, std::string>, std::size_t> run_index;
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      io_fail(cat("csv row ", row, ": expected ", header.size(),
                  " cells, got ", cells.size()));
    const double label_v = parse_double(cells[label_idx], row, schema.label_col);
    const int label = static_cast<int>(label_v);
    if (label < 1 || static_cast<double>(label) != label_v)
      io_fail(cat("csv row ", row, ": fault label must be a positive integer, got '",
                  cells[label_idx], "'"));
    const std::string& run_id = cells[run_idx];
    const auto key = std::make_pair(label, run_id);
    auto it = run_index.find(key);
    if (it == run_index.end()) {
      it = run_index.emplace(key, set.runs.size()).first;
      Run r;
      r.label = label;
      r.run_id = run_id;
      set.runs.push_back(std::move(r));
    }
    Run& r = set.runs[it->second];
    for (std::size_t i : var_cols)
      r.values.push_back(parse_double(cells[i], row, header[i]));
    r.n_samples += 1;
  }
  if (set.runs.empty()) io_fail(cat(path, ": no data rows"));
  return set;
}

void write_csv(const SeriesSet& series, const std::string& path,
               const CsvSchema& schema) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path, " for writing"));
  f << schema.label_col << "," << schema.run_col;
  for (const auto& name : series.var_names) f << "," << name;
  f << "\n";
  char buf[64];
  for (const auto& r : series.runs)
    for (std::size_t s = 0; s < r.n_samples; ++s) {
      f << r.label << "," << r.run_id;
      for (std::size_t i = 0; i < series.n_vars; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", r.values[s * series.n_vars + i]);
        f << "," << buf;
      }
      f << "\n";
    }
  if (!f) io_fail(cat("failed writing ", path));
}

// ---- synthetic data --------------------------------------------------------------

namespace {

std::size_t ceil_log2(std::size_t c) {
  std::size_t bits = 0;
  while ((std::size_t(1) << bits) < c) ++bits;
  return bits;
}

}  // namespace

// One group of far pairs per class, laid out group-major: class c activates
// pairs [ (c-1)*k, c*k ). Every pair spans exactly ceil(n/2) rows. Near
// members of consecutive classes sit on adjacent rows, so pooled feature
// maps blur precisely the row identities that separate the classes while
// the vectorized-image branch keeps them apart.
std::vector<std::pair<std::size_t, std::size_t>> synth_coupled_pairs(
    const SynthConfig& cfg, std::uint64_t seed) {
  const std::size_t n = cfg.n_vars, c_n = cfg.n_classes;
  const std::size_t half = (n + 1) / 2;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (n < 2 || half >= n) return pairs;
  const std::size_t near_space = n - half;  // rows that can start a pair
  if (near_space < c_n) return pairs;       // no room for one pair per class

  const std::size_t per_group = std::min<std::size_t>(2, near_space / c_n);
  Rng rng(derive_seed(seed, "synth-pairs"));
  std::vector<std::size_t> starts;
  std::vector<bool> used(near_space, false);
  for (std::size_t k = 0; k < per_group; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const auto s = static_cast<std::size_t>(rng.below(near_space - c_n + 1));
      bool free = true;
      for (std::size_t r = s; r < s + c_n; ++r) free = free && !used[r];
      if (!free) continue;
      for (std::size_t r = s; r < s + c_n; ++r) used[r] = true;
      starts.push_back(s);
      break;
    }
  }
  for (std::size_t g = 0; g < c_n; ++g)
    for (std::size_t s : starts) pairs.emplace_back(s + g, s + g + half);
  return pairs;
}

SeriesSet gen_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.n_vars < 1 || cfg.window < 1 || cfg.n_classes < 1 ||
      cfg.runs_per_class < 1 || cfg.samples_per_run < 1)
    fail("synth: all extents must be >= 1");
  if (cfg.coupling < 0) fail("synth: coupling must be >= 0");
  if (cfg.noise < 0) fail("synth: noise must be >= 0");

  const std::size_t n = cfg.n_vars;
  const auto pairs = synth_coupled_pairs(cfg, seed);

  // class mean-shift patterns on small random variable subsets
  std::vector<std::vector<double>> shift(cfg.n_classes + 1,
                                         std::vector<double>(n, 0.0));
  for (std::size_t c = 1; c <= cfg.n_classes; ++c) {
    Rng sr(derive_seed(seed, "synth-shift", c));
    const std::size_t subset = std::max<std::size_t>(1, n / 10);
    for (std::size_t s = 0; s < subset; ++s) {
      const std::size_t i = static_cast<std::size_t>(sr.below(n));
      const double sign = sr.uniform() < 0.5 ? -1.0 : 1.0;
      shift[c][i] = sign * (0.5 + sr.uniform()) * cfg.shift;
    }
  }

  // class c drives only its own pair group; the rest stay at base noise
  const std::size_t per_group =
      pairs.empty() ? 0 : pairs.size() / cfg.n_classes;
  auto pair_active = [&](std::size_t cls, std::size_t p) {
    return per_group > 0 && p / per_group == cls - 1;
  };

  // the shared latents run hot (stationary sd z_amp) so coupled rows dominate
  // their windows; the per-variable normalization later rescales everything
  const double phi_b = 0.8, phi_z = 0.9, z_amp = 3.0;
  const double b_innov = cfg.noise * std::sqrt(1.0 - phi_b * phi_b);
  const double z_innov = z_amp * std::sqrt(1.0 - phi_z * phi_z);

  auto padded = [](char prefix, std::size_t v, std::size_t max_v) {
    std::size_t width = 1;
    for (std::size_t t = max_v; t >= 10; t /= 10) ++width;
    std::string s = std::to_string(v);
    while (s.size() < width) s.insert(0, "0");
    return prefix + s;
  };

  SeriesSet set;
  set.n_vars = n;
  for (std::size_t i = 0; i < n; ++i)
    set.var_names.push_back(padded('v', i + 1, n));

  for (std::size_t c = 1; c <= cfg.n_classes; ++c)
    for (std::size_t ridx = 0; ridx < cfg.runs_per_class; ++ridx) {
      const std::size_t run_number = cfg.first_run + ridx;
      // stream index depends on (class, run number) only, so different
      // configs over disjoint run ranges draw disjoint noise
      Rng rr(derive_seed(seed, "synth-run", (c << 32) | run_number));
      Run run;
      run.label = static_cast<int>(c);
      run.run_id = padded('r', run_number, cfg.first_run + cfg.runs_per_class);
      run.n_samples = cfg.samples_per_run;
      run.values.resize(cfg.samples_per_run * n);

      std::vector<double> base(n);
      for (auto& b : base) b = cfg.noise * rr.normal();
      std::vector<double> z(pairs.size());
      for (auto& v : z) v = z_amp * rr.normal();

      for (std::size_t t = 0; t < cfg.samples_per_run; ++t) {
        for (auto& v : z) v = phi_z * v + z_innov * rr.normal();
        for (auto& b : base) b = phi_b * b + b_innov * rr.normal();
        double* row = run.values.data() + t * n;
        for (std::size_t i = 0; i < n; ++i) row[i] = shift[c][i] + base[i];
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          if (!pair_active(c, p)) continue;
          row[pairs[p].first] += cfg.coupling * z[p];
          row[pairs[p].second] += cfg.coupling * z[p];
        }
      }
      set.runs.push_back(std::move(run));
    }
  return set;
}

// ---- GFIM ------------------------------------------------------------------------

namespace {

void put_u32_le(std::ostream& f, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  f.write(b, 4);
}

std::uint32_t get_u32_le(std::istream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) io_fail(cat(path, ": truncated image set"));
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_dataset(const WindowedDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path, " for writing"));
  f.write("GFIM", 4);
  put_u32_le(f, 1);
  put_u32_le(f, static_cast<std::uint32_t>(ds.n));
  put_u32_le(f, static_cast<std::uint32_t>(ds.w));
  put_u32_le(f, static_cast<std::uint32_t>(ds.n_classes));
  put_u32_le(f, static_cast<std::uint32_t>(ds.images.size()));
  for (const auto& im : ds.images) {
    if (im.pixels.size() != ds.n * ds.w)
      fail(cat("save_dataset: image has ", im.pixels.size(), " pixels, set is ",
               ds.n, "x", ds.w));
    const char lb[2] = {static_cast<char>(im.label & 0xff),
                        static_cast<char>((im.label >> 8) & 0xff)};
    f.write(lb, 2);
    f.write(reinterpret_cast<const char*>(im.pixels.data()),
            static_cast<std::streamsize>(im.pixels.size()));
  }
  if (!f) io_fail(cat("failed writing ", path));
}

WindowedDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path));
  char magic[4];
  f.read(magic, 4);
  if (!f || std::strncmp(magic, "GFIM", 4) != 0)
    io_fail(cat(path, ": not a GFIM image set"));
  const std::uint32_t version = get_u32_le(f, path);
  if (version != 1) io_fail(cat(path, ": unsupported GFIM version ", version));
  WindowedDataset ds;
  ds.n = get_u32_le(f, path);
  ds.w = get_u32_le(f, path);
  ds.n_classes = get_u32_le(f, path);
  const std::uint32_t count = get_u32_le(f, path);
  if (ds.n == 0 || ds.w == 0) io_fail(cat(path, ": zero image extents"));
  ds.images.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char lb[2];
    f.read(reinterpret_cast<char*>(lb), 2);
    ImageWindow& im = ds.images[i];
    im.label = static_cast<std::uint16_t>(lb[0] | (lb[1] << 8));
    im.index = i;
    im.rows = ds.n;
    im.cols = ds.w;
    im.pixels.resize(ds.n * ds.w);
    f.read(reinterpret_cast<char*>(im.pixels.data()),
           static_cast<std::streamsize>(im.pixels.size()));
    if (!f) io_fail(cat(path, ": truncated image set at record ", i));
    if (im.label >= ds.n_classes)
      io_fail(cat(path, ": record ", i, " label ", im.label,
                  " out of range for ", ds.n_classes, " classes"));
  }
  return ds;
}

void write_dataset_manifest(const WindowedDataset& ds, const std::string& source,
                            const std::string& path) {
  std::ofstream f(path);
  if (!f) io_fail(cat("cannot open ", path, " for writing"));
  f << "gfcnn-imageset v1\n";
  f << "source " << source << "\n";
  f << "rows " << ds.n << "\ncols " << ds.w << "\nclasses " << ds.n_classes
    << "\nimages " << ds.images.size() << "\n";
  std::vector<std::size_t> per_class(ds.n_classes, 0);
  for (const auto& im : ds.images)
    if (im.label < per_class.size()) ++per_class[im.label];
  for (std::size_t c = 0; c < per_class.size(); ++c)
    f << "class " << c + 1 << " images " << per_class[c] << "\n";
}

// ---- stats file -------------------------------------------------------------------

void save_stats(const NormStats& stats, const std::vector<std::string>& var_names,
                const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path, " for writing"));
  f << "gfcnn-stats v1\n";
  f << "vars " << stats.mean.size() << "\n";
  char buf[64];
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    const std::string name =
        i < var_names.size() ? var_names[i] : cat("v", i + 1);
    f << "var " << name << " ";
    std::snprintf(buf, sizeof buf, "%.17g", stats.mean[i]);
    f << buf << " ";
    std::snprintf(buf, sizeof buf, "%.17g", stats.stddev[i]);
    f << buf << "\n";
  }
  if (!f) io_fail(cat("failed writing ", path));
}

NormStats load_stats(const std::string& path, std::vector<std::string>* var_names) {
  std::ifstream f(path);
  if (!f) io_fail(cat("cannot open ", path));
  std::string line;
  if (!std::getline(f, line) || line != "gfcnn-stats v1")
    io_fail(cat(path, ": not a gfcnn stats file"));
  NormStats st;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "vars") {
      ls >> n;
    } else if (key == "var") {
      std::string name;
      double mean = 0, sd = 0;
      ls >> name >> mean >> sd;
      if (ls.fail()) io_fail(cat(path, ": malformed line '", line, "'"));
      if (var_names) var_names->push_back(name);
      st.mean.push_back(mean);
      st.stddev.push_back(sd);
    } else if (!key.empty()) {
      io_fail(cat(path, ": unknown line '", line, "'"));
    }
  }
  if (st.mean.size() != n)
    io_fail(cat(path, ": header declares ", n, " variables, found ",
                st.mean.size()));
  return st;
}

std::uint64_t file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(cat("cannot open ", path));
  std::uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof buf);
    h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
  }
  return h;
}

}  // namespace gfcnn
