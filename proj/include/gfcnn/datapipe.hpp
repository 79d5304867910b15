#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gfcnn {

// One simulation run: m consecutive samples of n variables, sample-major.
struct Run {
  int label = 0;  // 1-based fault class
  std::string run_id;
  std::size_t n_samples = 0;
  std::vector<double> values;  // n_samples x n_vars, row per sample
};

struct SeriesSet {
  std::size_t n_vars = 0;
  std::vector<std::string> var_names;
  std::vector<Run> runs;

  std::size_t total_samples() const {
    std::size_t m = 0;
    for (const auto& r : runs) m += r.n_samples;
    return m;
  }
  int max_label() const {
    int c = 0;
    for (const auto& r : runs) c = std::max(c, r.label);
    return c;
  }
};

// Per-variable mean and population standard deviation over every training
// sample. Degenerate (constant) columns get stddev forced to 1 and are listed
// so callers can warn.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::size_t> degenerate;
};

NormStats compute_norm_stats(const SeriesSet& train);

// (x - mean) / stddev per variable; test sets must be normalized with the
// training stats.
SeriesSet normalize(const SeriesSet& series, const NormStats& stats);

// One n x w slice of a run, variable-major.
struct Window {
  int label = 0;  // 1-based fault class
  std::string run_id;
  std::size_t index = 0;  // position within the run
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;  // rows x cols
};

// Non-overlapping windows of width w; each run of length m yields floor(m/w)
// windows and windows never span runs.
std::vector<Window> window_series(const SeriesSet& series, std::size_t w);

struct ImageWindow {
  std::uint16_t label = 0;  // 0-based class index
  std::string run_id;
  std::uint32_t index = 0;
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // rows x cols, values 0..255
};

// Min-max scaling of the whole window to [0,255] with round-half-away-from-
// zero; a constant window maps to all zeros.
ImageWindow window_to_image(const Window& window);

struct WindowedDataset {
  std::size_t n = 0;          // image rows (variables)
  std::size_t w = 0;          // image cols (window width)
  std::size_t n_classes = 0;  // highest fault label seen
  std::vector<ImageWindow> images;
};

// Full windowing + conversion pass over an already-normalized set. Images are
// ordered by (label, run, window index) regardless of how the conversion is
// scheduled.
WindowedDataset make_dataset(const SeriesSet& normalized, std::size_t w);

// ---- CSV ingestion -----------------------------------------------------------

// Header-mapped schema: one label column, one run column, every other column
// is a variable unless listed in drop_cols (how the two constant TEP valves
// are excluded).
struct CsvSchema {
  std::string label_col = "fault";
  std::string run_col = "run";
  std::vector<std::string> drop_cols;
};

SeriesSet load_csv(const std::string& path, const CsvSchema& schema);
void write_csv(const SeriesSet& series, const std::string& path,
               const CsvSchema& schema = {});

// ---- synthetic data ------------------------------------------------------------

// Desk-scale stand-in for plant data. Each class gets a mean-shift pattern on
// a small variable subset (scaled by `shift`) and, when coupling > 0, its own
// group of shared-latent variable pairs at least n/2 apart: only the class's
// pairs co-move (driven by hot AR(1) latents), and near members of different
// classes sit on adjacent rows, which defeats pooled local features but not a
// view of the raw rows. `noise` is the stationary standard deviation of the
// per-variable AR(1) background. Fully determined by the seed.
struct SynthConfig {
  std::size_t n_vars = 50;
  std::size_t window = 20;  // intended downstream window width
  std::size_t n_classes = 4;
  std::size_t runs_per_class = 10;
  std::size_t samples_per_run = 1000;
  std::size_t first_run = 0;  // run-number offset: same seed + disjoint run
                              // ranges = fresh runs of the same process
  double coupling = 1.0;  // gamma
  double noise = 0.5;     // sigma
  double shift = 1.0;
};

SeriesSet gen_synthetic(const SynthConfig& cfg, std::uint64_t seed);

// Far pairs used by gen_synthetic for a given config/seed, for tests and
// audits of the induced correlations.
std::vector<std::pair<std::size_t, std::size_t>> synth_coupled_pairs(
    const SynthConfig& cfg, std::uint64_t seed);

// ---- image-set file ------------------------------------------------------------

// Binary "GFIM" format: magic, u32 version/n/w/C/count (little-endian), then
// count records of u16 label + n*w pixel bytes.
void save_dataset(const WindowedDataset& ds, const std::string& path);
WindowedDataset load_dataset(const std::string& path);
void write_dataset_manifest(const WindowedDataset& ds,
                            const std::string& source,
                            const std::string& path);

// ---- normalization-stats file ----------------------------------------------------

void save_stats(const NormStats& stats,
                const std::vector<std::string>& var_names,
                const std::string& path);
NormStats load_stats(const std::string& path,
                     std::vector<std::string>* var_names = nullptr);

std::uint64_t file_digest(const std::string& path);

}  // namespace gfcnn
