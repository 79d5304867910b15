// Command-line front end: csv -> image-set conversion, synthetic data
// generation, training, evaluation, and architecture auditing.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gfcnn/common.hpp"
#include "gfcnn/eval.hpp"
#include "gfcnn/model_io.hpp"
#include "gfcnn/train.hpp"

using namespace gfcnn;

namespace {

void set_jobs(int jobs) {
#ifdef _OPENMP
  if (jobs > 0) omp_set_num_threads(jobs);
#else
  (void)jobs;
#endif
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct ConvertArgs {
  std::string csv, out, stats_path;
  std::string stats_source = "compute";
  std::size_t window = 20;
  CsvSchema schema;
  int jobs = 0;
};

int run_convert(const ConvertArgs& a) {
  set_jobs(a.jobs);
  SeriesSet raw = load_csv(a.csv, a.schema);
  NormStats stats;
  if (a.stats_source == "compute") {
    stats = compute_norm_stats(raw);
    save_stats(stats, raw.var_names, a.stats_path);
  } else {
    stats = load_stats(a.stats_path);
  }
  for (std::size_t i : stats.degenerate)
    std::cerr << "warning: variable "
              << (i < raw.var_names.size() ? raw.var_names[i] : cat("#", i))
              << " is constant in the training data; stddev forced to 1\n";
  WindowedDataset ds = make_dataset(normalize(raw, stats), a.window);
  save_dataset(ds, a.out);
  write_dataset_manifest(ds, a.csv, a.out + ".manifest");
  std::cout << "wrote " << ds.images.size() << " images (" << ds.n << "x"
            << ds.w << ", " << ds.n_classes << " classes) to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string images, arch, out, history, eval_images;
  HyperParams hp;
  std::vector<std::uint64_t> seeds;
  std::string precision = "f32";
  int jobs = 0;
};

template <class T>
double train_once(const TrainArgs& a, const WindowedDataset& train_set,
                  const WindowedDataset* eval_set, std::uint64_t seed,
                  const std::string& model_path,
                  const std::string& history_path) {
  ArchSpec spec = parse_arch(a.arch);
  spec.input_rows = train_set.n;
  spec.input_cols = train_set.w;
  spec.n_classes = train_set.n_classes;

  HyperParams hp = a.hp;
  hp.seed = seed;
  Model<T> model = build_model<T>(spec, seed);
  std::cout << "training " << spec.to_string() << " ("
            << count_params(model).total << " parameters, seed " << seed
            << ", " << a.precision << ")\n";
  TrainHistory history = train(model, train_set, hp, eval_set, &std::cout);

  save_model(model, model_path);
  if (!history_path.empty()) save_history(history, history_path);

  // run manifest: everything needed to reproduce this run, no timing
  {
    std::ofstream mf(model_path + ".run", std::ios::binary);
    mf << "gfcnn-run v1\n";
    mf << "arch " << spec.to_string() << "\n";
    mf << "input " << spec.input_rows << " " << spec.input_cols << "\n";
    mf << "classes " << spec.n_classes << "\n";
    mf << "optimizer adam\n";
    mf << "batch_size " << hp.batch_size << "\nepochs " << hp.epochs
       << "\nlearning_rate " << hp.learning_rate << "\ndropout_rate "
       << hp.dropout_rate << "\nbeta1 " << hp.beta1 << "\nbeta2 " << hp.beta2
       << "\nepsilon " << hp.epsilon << "\n";
    mf << "seed " << seed << "\n";
    mf << "precision " << a.precision << "\n";
    mf << "pixel_scale 1/255\n";
    mf << "train_set " << a.images << " digest " << std::hex
       << file_digest(a.images) << std::dec << "\n";
    if (!a.eval_images.empty())
      mf << "eval_set " << a.eval_images << " digest " << std::hex
         << file_digest(a.eval_images) << std::dec << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", history.epochs.back().mean_loss);
    mf << "final_loss " << buf << "\n";
  }

  std::cout << "final epoch loss " << history.epochs.back().mean_loss << "\n";
  double macro = -1.0;
  if (eval_set) {
    auto preds = predict(model, *eval_set);
    std::vector<std::size_t> p(preds.size()), l(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p[i] = preds[i].cls;
      l[i] = eval_set->images[i].label;
    }
    auto rep = make_report(confusion(p, l, spec.n_classes));
    macro = rep.macro_fdr;
    std::cout << "eval macro-FDR " << fmt4(macro) << "\n";
  }
  std::cout << "wrote " << model_path << "\n";
  return macro;
}

int run_train(const TrainArgs& a) {
  set_jobs(a.jobs);
  WindowedDataset train_set = load_dataset(a.images);
  WindowedDataset eval_set;
  const bool have_eval = !a.eval_images.empty();
  if (have_eval) eval_set = load_dataset(a.eval_images);

  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) seeds.push_back(a.hp.seed);

  std::vector<double> macros;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    std::string model_path = a.out;
    std::string history_path = a.history;
    if (seeds.size() > 1) {
      model_path += cat(".s", seeds[i]);
      if (!history_path.empty()) history_path += cat(".s", seeds[i]);
    }
    const double macro =
        a.precision == "f64"
            ? train_once<double>(a, train_set, have_eval ? &eval_set : nullptr,
                                 seeds[i], model_path, history_path)
            : train_once<float>(a, train_set, have_eval ? &eval_set : nullptr,
                                seeds[i], model_path, history_path);
    if (macro >= 0) macros.push_back(macro);
  }
  if (macros.size() > 1) {
    double mean = 0, mn = macros[0], mx = macros[0];
    for (double m : macros) {
      mean += m;
      mn = std::min(mn, m);
      mx = std::max(mx, m);
    }
    mean /= static_cast<double>(macros.size());
    std::cout << "macro-FDR over " << macros.size() << " seeds: mean "
              << fmt4(mean) << " min " << fmt4(mn) << " max " << fmt4(mx)
              << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string model, images, report;
  std::string precision = "f32";
  int jobs = 0;
};

template <class T>
int eval_with(const EvalArgs& a) {
  Model<T> model = load_model<T>(a.model);
  WindowedDataset ds = load_dataset(a.images);
  if (ds.n_classes != model.spec.n_classes)
    fail(cat("image set has ", ds.n_classes, " classes, model expects ",
             model.spec.n_classes));
  auto preds = predict(model, ds);
  std::vector<std::size_t> p(preds.size()), l(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p[i] = preds[i].cls;
    l[i] = ds.images[i].label;
  }
  auto rep = make_report(confusion(p, l, model.spec.n_classes),
                         {{"model", a.model}, {"images", a.images}});
  for (std::size_t c = 0; c < rep.class_defined.size(); ++c)
    if (!rep.class_defined[c])
      std::cerr << "warning: class " << c + 1
                << " has no samples; excluded from the macro average\n";
  if (!a.report.empty()) {
    write_report(rep, a.report);
    std::cout << "wrote " << a.report << "\n";
  }
  std::cout << "macro-FDR " << fmt4(rep.macro_fdr) << " accuracy "
            << fmt4(rep.accuracy) << " over " << preds.size() << " images\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  set_jobs(a.jobs);
  return a.precision == "f64" ? eval_with<double>(a) : eval_with<float>(a);
}

struct ParamsArgs {
  std::string arch;
  std::vector<std::size_t> input{50, 20};
  std::size_t classes = 20;
};

int run_params(const ParamsArgs& a) {
  ArchSpec spec = parse_arch(a.arch);
  spec.input_rows = a.input[0];
  spec.input_cols = a.input[1];
  spec.n_classes = a.classes;
  ShapeTrace tr = trace_shapes(spec);
  ParamCount pc = count_params(spec);

  std::cout << "arch " << spec.to_string() << "\n";
  std::cout << "input " << spec.input_rows << "x" << spec.input_cols << ", "
            << spec.n_classes << " classes\n";
  for (const auto& e : tr.entries) {
    std::cout << "  " << e.label << " -> ";
    for (std::size_t i = 0; i < e.shape.size(); ++i)
      std::cout << (i ? "x" : "") << e.shape[i];
    std::cout << "\n";
  }
  std::cout << "  cnn feature width " << tr.flat_cnn;
  if (tr.mlp_dim) std::cout << " + global " << tr.mlp_dim;
  std::cout << " -> first fc fan-in " << tr.first_fc_in << "\n";
  std::cout << "parameters total " << group_digits(pc.total) << " (conv "
            << group_digits(pc.conv) << ", mlp " << group_digits(pc.mlp)
            << ", fc " << group_digits(pc.fc) << ")\n";
  return 0;
}

struct SynthArgs {
  std::string out;
  SynthConfig cfg;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
  SeriesSet s = gen_synthetic(a.cfg, a.seed);
  write_csv(s, a.out);
  std::cout << "wrote " << s.runs.size() << " runs x "
            << a.cfg.samples_per_run << " samples of " << a.cfg.n_vars
            << " variables to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gfcnn: global-feature-enhanced CNN for multivariate time-series fault "
      "diagnosis"};
  app.require_subcommand(1);

  ConvertArgs conv;
  auto* c = app.add_subcommand(
      "convert", "Normalize a CSV export and cut it into labeled gray images");
  c->add_option("--csv", conv.csv, "input CSV file")->required();
  c->add_option("--out", conv.out, "output image set (.gfim)")->required();
  c->add_option("-w,--window", conv.window, "window width")
      ->check(CLI::PositiveNumber);
  c->add_option("--stats", conv.stats_path,
                "normalization stats file (written or read)")
      ->required();
  c->add_option("--stats-source", conv.stats_source,
                "compute: derive from this data and write --stats; "
                "file: reuse training stats from --stats")
      ->check(CLI::IsMember({"compute", "file"}));
  c->add_option("--label-col", conv.schema.label_col, "fault label column");
  c->add_option("--run-col", conv.schema.run_col, "run id column");
  c->add_option("--drop", conv.schema.drop_cols,
                "variable columns to exclude")->delimiter(',');
  c->add_option("--jobs", conv.jobs, "worker threads for window conversion");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on an image set");
  t->add_option("--images", tr.images, "training image set")->required();
  t->add_option("--arch", tr.arch, "architecture string, e.g. C(16)-P(2)-G(10)-F(100)*")
      ->required();
  t->add_option("--out", tr.out, "output model file")->required();
  t->add_option("--history", tr.history, "loss history file");
  t->add_option("--eval", tr.eval_images, "image set evaluated each epoch");
  t->add_option("--batch", tr.hp.batch_size, "batch size")
      ->check(CLI::PositiveNumber);
  t->add_option("--epochs", tr.hp.epochs, "epochs")->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.hp.learning_rate, "learning rate");
  t->add_option("--dropout", tr.hp.dropout_rate, "dropout rate for * layers");
  t->add_option("--seed", tr.hp.seed, "run seed");
  t->add_option("--seeds", tr.seeds,
                "repeat training once per seed; reports mean/min/max macro-FDR")
      ->delimiter(',');
  t->add_option("--precision", tr.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  t->add_option("--jobs", tr.jobs, "kernel threads");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a model on an image set");
  e->add_option("--model", ev.model, "model file")->required();
  e->add_option("--images", ev.images, "image set")->required();
  e->add_option("--report", ev.report, "report file");
  e->add_option("--precision", ev.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  e->add_option("--jobs", ev.jobs, "inference threads");

  ParamsArgs pa;
  auto* p = app.add_subcommand(
      "params", "Trace shapes and count parameters of an architecture");
  p->add_option("--arch", pa.arch, "architecture string")->required();
  p->add_option("--input", pa.input, "input extents: rows cols")
      ->expected(2);
  p->add_option("--classes", pa.classes, "class count")
      ->check(CLI::PositiveNumber);

  SynthArgs sy;
  auto* s = app.add_subcommand(
      "synth", "Generate a synthetic labeled series set as CSV");
  s->add_option("--out", sy.out, "output CSV")->required();
  s->add_option("--n", sy.cfg.n_vars, "variables");
  s->add_option("-w,--window", sy.cfg.window, "intended window width");
  s->add_option("--classes", sy.cfg.n_classes, "fault classes");
  s->add_option("--runs-per-class", sy.cfg.runs_per_class, "runs per class");
  s->add_option("--samples-per-run", sy.cfg.samples_per_run, "samples per run");
  s->add_option("--gamma", sy.cfg.coupling, "far-pair coupling strength");
  s->add_option("--noise", sy.cfg.noise, "background AR(1) standard deviation");
  s->add_option("--shift", sy.cfg.shift, "class mean-shift scale");
  s->add_option("--seed", sy.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c) return run_convert(conv);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*p) return run_params(pa);
    if (*s) return run_synth(sy);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
