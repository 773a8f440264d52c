// tabsynth command-line front end.
//
// Exit codes: 0 success, 1 a cell or run failed, 2 invalid input.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tabsynth/classify.hpp"
#include "tabsynth/ctgan.hpp"
#include "tabsynth/dataset.hpp"
#include "tabsynth/evaluate.hpp"
#include "tabsynth/harness.hpp"
#include "tabsynth/resample.hpp"

namespace fs = std::filesystem;
using namespace tabsynth;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 1;
  std::string out_dir;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

// Output goes to `file` if given, else under --out-dir, else stdout.
void emit(const Globals& g, const std::string& file, const std::string& fallback_name, const std::string& text) {
  if (!file.empty()) {
    spit(file, text);
  } else if (!g.out_dir.empty()) {
    spit(fs::path(g.out_dir) / fallback_name, text);
  } else {
    std::cout << text;
  }
}

// Feature rows for prediction; the label column is optional here.
TabularDataset load_features(const std::string& path, const std::string& label) {
  const std::string text = slurp(path);
  const auto eol = text.find('\n');
  const auto header = split(trim(text.substr(0, eol)), ',');
  for (const auto& h : header) {
    if (trim(h) == label) return parse_csv(text, label);
  }
  std::ostringstream patched;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    patched << line << ',' << (first ? label : std::string("?")) << '\n';
    first = false;
  }
  return parse_csv(patched.str(), label);
}

std::map<std::string, std::size_t> parse_targets(const std::vector<std::string>& items) {
  std::map<std::string, std::size_t> t;
  for (const auto& item : items) {
    const auto eq = item.rfind('=');
    if (eq == std::string::npos) throw Error("target '" + item + "' is not Class=count");
    double v = 0;
    if (!parse_double(item.substr(eq + 1), v) || v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw Error("target '" + item + "' has an invalid count");
    }
    t[item.substr(0, eq)] = static_cast<std::size_t>(v);
  }
  return t;
}

void write_metrics(const Globals& g, const std::string& dir_opt, const ConfusionMatrix& cm) {
  const MetricSummary m = class_metrics(cm);
  const std::string dir = dir_opt.empty() ? g.out_dir : dir_opt;
  if (dir.empty()) {
    std::cout << metrics_csv(m) << '\n' << confusion_csv(cm);
    return;
  }
  spit(fs::path(dir) / "metrics.csv", metrics_csv(m));
  spit(fs::path(dir) / "confusion.csv", confusion_csv(cm));
  spit(fs::path(dir) / "confusion_normalized.csv", confusion_normalized_csv(cm));
}

void write_fidelity(const fs::path& dir, const FidelityReport& r) {
  spit(dir / "report.txt", fidelity_text(r));
  spit(dir / "features.csv", fidelity_summary_csv(r));
  for (const auto& f : r.features) spit(dir / "hist" / (f.name + ".csv"), histogram_csv(f));
}

ProgressLog stderr_log() {
  return [](const std::string& msg) { std::cerr << "tabsynth: " << msg << '\n'; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imbalanced tabular classification with conditional GAN oversampling"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--workers", g.workers, "Parallel experiment workers")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory");

  std::string label = "label";
  const auto label_opt = [&](CLI::App* sub) { sub->add_option("--label", label, "Label column name"); };

  // bench
  auto* bench = app.add_subcommand("bench", "Write a synthetic benchmark dataset as CSV");
  std::string preset = "crop7", bench_out;
  bench->add_option("--preset", preset, "Benchmark preset")->check(CLI::IsMember({"crop7"}));
  bench->add_option("--out", bench_out, "Output CSV (default: stdout or <out-dir>/<preset>.csv)");

  // resample
  auto* res = app.add_subcommand("resample", "Rebalance a training CSV");
  std::string res_strategy, res_input, res_out, res_model;
  std::vector<std::string> res_targets;
  std::size_t res_k = 5, res_add = 1000;
  res->add_option("--strategy", res_strategy, "smote | ros | rus | ctgan")->required();
  res->add_option("--input", res_input, "Training CSV")->required()->check(CLI::ExistingFile);
  res->add_option("--out", res_out, "Output CSV");
  res->add_option("--target,--target-class", res_targets, "Class=count (repeatable)");
  res->add_option("--k-neighbors", res_k, "SMOTE neighbours");
  res->add_option("--model", res_model, "CTGAN checkpoint (strategy ctgan)");
  res->add_option("--add", res_add, "CTGAN rows added per minority class when no --target is given");
  label_opt(res);

  // train / predict / evaluate
  auto* train = app.add_subcommand("train", "Train a classifier");
  std::string tr_kind, tr_params, tr_input, tr_out;
  train->add_option("--model", tr_kind, "knn | rf | gbdt")->required()->check(CLI::IsMember({"knn", "rf", "gbdt"}));
  train->add_option("--params", tr_params, "key=value,...");
  train->add_option("--input", tr_input, "Training CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--out", tr_out, "Checkpoint path")->required();
  label_opt(train);

  auto* predict = app.add_subcommand("predict", "Predict labels with a trained classifier");
  std::string pr_model, pr_input, pr_out;
  predict->add_option("--model", pr_model, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--input", pr_input, "Feature CSV (label column optional)")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pr_out, "Predictions CSV");
  label_opt(predict);

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against a labelled CSV");
  std::string ev_input, ev_model, ev_preds, ev_dir;
  evaluate->add_option("--input", ev_input, "Labelled test CSV")->required()->check(CLI::ExistingFile);
  auto* ev_m = evaluate->add_option("--model", ev_model, "Classifier checkpoint")->check(CLI::ExistingFile);
  auto* ev_p = evaluate->add_option("--predictions", ev_preds, "Predictions CSV from `predict`")->check(CLI::ExistingFile);
  ev_m->excludes(ev_p);
  evaluate->add_option("--report-dir", ev_dir, "Directory for metrics and confusion CSVs");
  label_opt(evaluate);

  // fidelity
  auto* fid = app.add_subcommand("fidelity", "Compare real and synthetic feature distributions");
  std::string fd_real, fd_synth, fd_class;
  std::size_t fd_bins = 30;
  fid->add_option("--real", fd_real, "Real CSV")->required()->check(CLI::ExistingFile);
  fid->add_option("--synthetic", fd_synth, "Synthetic CSV")->required()->check(CLI::ExistingFile);
  fid->add_option("--class", fd_class, "Restrict both sides to one class");
  fid->add_option("--bins", fd_bins, "Histogram bins")->check(CLI::PositiveNumber);
  label_opt(fid);

  // experiment / sweep
  auto* exp = app.add_subcommand("experiment", "Run an experiment plan");
  std::string plan_path;
  exp->add_option("--plan", plan_path, "Plan file (JSON)")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Sweep the number of CTGAN rows per minority class");
  std::string sw_plan, sw_out;
  std::vector<std::size_t> sw_counts;
  sweep->add_option("--plan", sw_plan, "Plan file (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--counts", sw_counts, "Counts (default: the plan's synthetic_count_sweep)")->delimiter(',');
  sweep->add_option("--out", sw_out, "Output CSV");

  // ctgan train / generate
  auto* ctgan = app.add_subcommand("ctgan", "Train or sample a conditional GAN");
  ctgan->require_subcommand(1);
  ctgan->fallthrough();
  auto* ct_train = ctgan->add_subcommand("train", "Train a model on a CSV");
  std::string ct_input, ct_out;
  TrainConfig ct_cfg;
  ct_train->add_option("--input", ct_input, "Training CSV")->required()->check(CLI::ExistingFile);
  ct_train->add_option("--out", ct_out, "Checkpoint path")->required();
  ct_train->add_option("--epochs", ct_cfg.epochs, "Epochs");
  ct_train->add_option("--batch-size", ct_cfg.batch_size, "Batch size");
  ct_train->add_option("--lr,--learning-rate", ct_cfg.learning_rate, "Adam learning rate");
  ct_train->add_option("--max-modes", ct_cfg.vgmm.max_modes, "Mixture modes per feature");
  bool ct_no_gp = false;
  ct_train->add_flag("--no-gradient-penalty", ct_no_gp, "Train on the bare critic loss");
  std::string ct_log;
  ct_train->add_option("--loss-log", ct_log, "Write per-epoch losses to this CSV");
  label_opt(ct_train);
  auto* ct_gen = ctgan->add_subcommand("generate", "Generate rows of one class");
  std::string cg_model, cg_class, cg_out;
  std::size_t cg_n = 100;
  ct_gen->add_option("--model", cg_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  ct_gen->add_option("--class", cg_class, "Class to generate")->required();
  ct_gen->add_option("-n,--n,--count", cg_n, "Rows");
  ct_gen->add_option("--out", cg_out, "Output CSV");
  label_opt(ct_gen);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*bench) {
      const TabularDataset ds = make_benchmark(parse_benchmark_name(preset, g.seed_set ? g.seed : 2012));
      emit(g, bench_out, preset + ".csv", to_csv(ds, label));
    } else if (*res) {
      const TabularDataset ds = load_csv(res_input, label);
      const Strategy s = parse_strategy(res_strategy);
      TabularDataset out;
      if (s == Strategy::ctgan) {
        if (res_model.empty()) throw Error("resample: --model is required for the ctgan strategy");
        const CtganModel model = CtganModel::deserialize(slurp(res_model));
        auto targets = parse_targets(res_targets);
        if (targets.empty()) {
          for (const auto& [c, ir] : imbalance_ratios(ds).imbalance_ratios) {
            if (ir <= 0.1) targets[c] = ds.class_rows(c).size() + res_add;
          }
        }
        out = augment_with_ctgan(model, ds, targets, g.seed);
      } else {
        ResamplePlan plan{s, parse_targets(res_targets), res_k, g.seed};
        out = resample(ds, plan);
      }
      emit(g, res_out, "resampled.csv", to_csv(out, label));
    } else if (*train) {
      const TabularDataset ds = load_csv(tr_input, label);
      ClassifierParams params = parse_classifier_params(tr_kind, tr_params);
      if (g.seed_set) params = with_seed(params, g.seed);
      spit(tr_out, Classifier::train(params, ds).serialize());
    } else if (*predict) {
      const Classifier clf = Classifier::deserialize(slurp(pr_model));
      const auto pred = clf.predict(load_features(pr_input, label));
      std::ostringstream o;
      o << "row,predicted\n";
      for (std::size_t i = 0; i < pred.size(); ++i) o << i << ',' << pred[i] << '\n';
      emit(g, pr_out, "predictions.csv", o.str());
    } else if (*evaluate) {
      const TabularDataset ds = load_csv(ev_input, label);
      std::vector<std::string> pred;
      std::vector<std::string> classes = ds.classes();
      if (!ev_model.empty()) {
        const Classifier clf = Classifier::deserialize(slurp(ev_model));
        pred = clf.predict(ds);
        classes.insert(classes.end(), clf.classes().begin(), clf.classes().end());
      } else if (!ev_preds.empty()) {
        const TabularDataset p = parse_csv(slurp(ev_preds), "predicted");
        pred = p.labels();
        classes.insert(classes.end(), pred.begin(), pred.end());
      } else {
        throw Error("evaluate: one of --model or --predictions is required");
      }
      std::sort(classes.begin(), classes.end());
      classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
      write_metrics(g, ev_dir, confusion(ds.labels(), pred, classes));
    } else if (*fid) {
      TabularDataset real = load_csv(fd_real, label);
      TabularDataset synth = load_csv(fd_synth, label);
      if (!fd_class.empty()) {
        real = real.subset(real.class_rows(fd_class));
        synth = synth.subset(synth.class_rows(fd_class));
      }
      const FidelityReport r = fidelity(real, synth, fd_bins);
      if (g.out_dir.empty()) std::cout << fidelity_text(r);
      else write_fidelity(g.out_dir, r);
    } else if (*exp) {
      ExperimentPlan plan = load_plan(plan_path);
      if (g.seed_set) plan.master_seed = g.seed;
      if (app.get_option("--workers")->count() > 0) plan.workers = g.workers;
      if (!g.out_dir.empty()) plan.outputs = g.out_dir;
      const ExperimentReport report = run_experiment(plan, stderr_log());
      write_bundle(report, plan.outputs);
      std::cerr << "tabsynth: wrote " << report.files.size() << " files to " << plan.outputs.string() << '\n';
      if (report.any_failed()) {
        std::cerr << "tabsynth: some cells failed; see summary.csv\n";
        return 1;
      }
    } else if (*sweep) {
      ExperimentPlan plan = load_plan(sw_plan);
      if (g.seed_set) plan.master_seed = g.seed;
      const auto counts = sw_counts.empty() ? plan.synthetic_count_sweep : sw_counts;
      const auto rows = sweep_synthetic_counts(plan, counts, stderr_log());
      std::vector<std::string> minority;
      if (!rows.empty()) {
        for (const auto& [m, f] : rows.front().minority_f1) minority.push_back(m);
      }
      emit(g, sw_out, "sweep.csv", sweep_csv(rows, minority));
    } else if (*ctgan) {
      if (*ct_train) {
        const TabularDataset ds = load_csv(ct_input, label);
        ct_cfg.seed = g.seed;
        if (ct_no_gp) ct_cfg.gradient_penalty_weight = 0.0;
        const CtganModel model = train_ctgan(ds, ct_cfg, [&](const LossRecord& r) {
          if (r.epoch % 10 == 0) {
            std::cerr << "epoch " << r.epoch << " L_D=" << format_double(r.discriminator_loss)
                      << " L_G=" << format_double(r.generator_loss) << '\n';
          }
        });
        spit(ct_out, model.serialize());
        if (!ct_log.empty()) {
          std::ostringstream o;
          o << "epoch,discriminator_loss,generator_loss\n";
          for (const auto& r : model.training_log) {
            o << r.epoch << ',' << format_double(r.discriminator_loss) << ',' << format_double(r.generator_loss) << '\n';
          }
          spit(ct_log, o.str());
        }
      } else {
        const CtganModel model = CtganModel::deserialize(slurp(cg_model));
        emit(g, cg_out, "generated.csv", to_csv(generate(model, cg_class, cg_n, g.seed), label));
      }
    }
  } catch (const Error& e) {
    std::cerr << "tabsynth: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "tabsynth: failure: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
