// sinet: train, evaluate and decode the models; FLOP tables; synthetic data;
// gradient checks.
//
// Exit codes: 0 success, 1 validation failure (a check or the data failed),
// 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <type_traits>

#include "CLI11.hpp"
#include "sinet/costmodel.hpp"
#include "sinet/gradcheck_suite.hpp"
#include "sinet/tasks.hpp"

namespace fs = std::filesystem;
using namespace sinet;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct Options {
  std::string task = "action";
  std::string config;
  std::uint64_t seed = 1;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> K;
  std::optional<std::string> selection;
  std::optional<std::string> mode;
  std::optional<std::string> fine;
  std::optional<std::size_t> hidden;
  std::string precision = "f32";
  std::string out;
  bool tsv = false;

  std::string data;
  std::string train_manifest;
  std::string val_manifest;
  std::string checkpoint;
  std::string resume;
  double clip = 0.0;
  std::size_t patience = 5;
  bool verbose = false;

  std::size_t beam = 5;
  std::size_t max_len = kMaxCaptionWords;
  bool length_norm = false;

  std::optional<std::size_t> N;
  std::optional<std::size_t> T;
  std::size_t d_in = 2048;
  std::size_t d_hidden = 2048;

  std::size_t seeds = 20;
  std::string filter;
  std::optional<double> tolerance;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Task task_of(const Options& o) {
  try {
    return parse_task(o.task);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

ConfigMap load_config(const Options& o) { return o.config.empty() ? ConfigMap{} : ConfigMap::load(o.config); }

// Manifest paths for the train and validation splits.
std::pair<std::string, std::string> split_manifests(const Options& o) {
  std::string train = o.train_manifest;
  std::string val = o.val_manifest;
  if (!o.data.empty()) {
    if (train.empty()) train = (fs::path(o.data) / "train" / "manifest.tsv").string();
    if (val.empty()) val = (fs::path(o.data) / "val" / "manifest.tsv").string();
  }
  if (train.empty()) throw UsageError("train needs --data DIR or --train MANIFEST");
  if (val.empty()) throw UsageError("train needs --data DIR or --val MANIFEST");
  return {train, val};
}

// vocab.txt written by synth next to the splits, or empty (built from the
// training captions).
Vocabulary dataset_vocab(const Options& o, const std::string& train_manifest) {
  const fs::path split = fs::path(train_manifest).parent_path();
  std::vector<fs::path> candidates = {split / "vocab.txt", split.parent_path() / "vocab.txt"};
  if (!o.data.empty()) candidates.insert(candidates.begin(), fs::path(o.data) / "vocab.txt");
  for (const fs::path& p : candidates) {
    if (fs::exists(p)) return Vocabulary::load(p.string());
  }
  return {};
}

template <typename T>
std::size_t feature_dim_of(const Dataset<T>& d) {
  return d.samples.front().feature_dim();
}

void apply_action_flags(const Options& o, ConfigMap& map) {
  if (o.K) map.set("K", *o.K);
  if (o.selection) map.set("selection", *o.selection);
  if (o.fine) map.set("fine", *o.fine);
  if (o.hidden) {
    const std::size_t h = *o.hidden;
    map.set("phi_widths", std::vector<std::size_t>{h, h});
    map.set("theta_widths", std::vector<std::size_t>{h, h, h});
    map.set("lstm_hidden", h);
  }
}

void apply_caption_flags(const Options& o, ConfigMap& map) {
  if (o.K) map.set("K", *o.K);
  if (o.selection) map.set("selection", *o.selection);
  if (o.mode) map.set("mode", *o.mode);
  if (o.hidden) {
    const std::size_t h = *o.hidden;
    for (const char* k : {"phi_dim", "hoi_hidden", "embed_dim", "attn_hidden", "lang_hidden", "attention_dim"}) {
      map.set(k, h);
    }
    map.set("theta_widths", std::vector<std::size_t>{h});
  }
}

void print_log(const std::vector<EpochRecord>& log, const std::string& metric) {
  std::printf("epoch\ttrain_loss\tval_loss\t%s\tlr\n", metric.c_str());
  for (const EpochRecord& r : log) {
    std::printf("%zu\t%.6f\t%.6f\t%.6f\t%.3g\n", r.epoch, r.train_loss, r.val_loss, r.metric, r.lr);
  }
}

TrainOptions train_options(const Options& o, const ConfigMap& cfg, Task task) {
  TrainOptions t;
  const bool action = task == Task::kAction;
  t.lr = o.lr.value_or(cfg.get_double("lr", action ? 1e-5 : 1e-3));
  t.batch = o.batch.value_or(cfg.get_size("batch", action ? 64 : 32));
  t.epochs = o.epochs.value_or(cfg.get_size("epochs", 30));
  t.seed = o.seed;
  t.clip_norm = o.clip > 0 ? o.clip : cfg.get_double("clip_norm", 0.0);
  t.patience = cfg.get_size("patience", o.patience);
  t.min_batch = 2;
  t.out_dir = o.out;
  t.resume_dir = o.resume;
  t.metric_name = action ? "top1" : "bleu4";
  t.verbose = o.verbose;
  if (t.batch < 2) throw UsageError("--batch must be at least 2 (batch norm needs two videos)");
  if (t.epochs == 0) throw UsageError("--epochs must be positive");
  return t;
}

// ---------------------------------------------------------------------------

template <typename T>
int run_train(const Options& o) {
  const Task task = task_of(o);
  const auto [train_path, val_path] = split_manifests(o);
  ConfigMap cfg = load_config(o);
  const TrainOptions topt = train_options(o, cfg, task);
  Rng rng(o.seed);
  if (task == Task::kAction) {
    const Dataset<T> train = load_dataset<T>(Manifest::load(train_path), task);
    const Dataset<T> val = load_dataset<T>(Manifest::load(val_path), task);
    if (train.empty() || val.empty()) throw EmptyInputError("train and validation sets must be non-empty");
    apply_action_flags(o, cfg);
    cfg.set("feature_dim", feature_dim_of(train));
    cfg.set("num_classes", cfg.get_size("num_classes", std::max(train.num_classes, val.num_classes)));
    SinetModel<T> model(SinetConfig::read(cfg));
    model.init(rng);
    TrainHooks<T> hooks = action_hooks(model, val);
    const TrainResult r = train_loop(hooks, train, topt);
    print_log(r.log, topt.metric_name);
    return kOk;
  }
  const Vocabulary vocab = dataset_vocab(o, train_path);
  const Dataset<T> train = load_dataset<T>(Manifest::load(train_path), task, vocab);
  const Dataset<T> val = load_dataset<T>(Manifest::load(val_path), task, train.vocab);
  if (train.empty() || val.empty()) throw EmptyInputError("train and validation sets must be non-empty");
  apply_caption_flags(o, cfg);
  cfg.set("feature_dim", feature_dim_of(train));
  cfg.set("vocab_size", train.vocab.size());
  CaptionModel<T> model(CaptionConfig::read(cfg));
  model.init(rng);
  TrainHooks<T> hooks = caption_hooks(model, val);
  const Vocabulary& v = train.vocab;
  hooks.on_checkpoint = [&v](const std::string& dir) { v.save((fs::path(dir) / "vocab.txt").string()); };
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    v.save((fs::path(o.out) / "vocab.txt").string());
  }
  const TrainResult r = train_loop(hooks, train, topt);
  print_log(r.log, topt.metric_name);
  return kOk;
}

// Restores a model stored by train; the task follows from the checkpoint.
struct Restored {
  ConfigMap config;
  std::string model;
};

Restored read_model_config(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint DIR is required");
  Restored r;
  r.config = read_checkpoint_config(o.checkpoint);
  try {
    r.model = r.config.get_string("model");
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint '" + o.checkpoint + "': " + e.what());
  }
  return r;
}

// A model config stored in a checkpoint; a bad one is a broken checkpoint.
template <typename C>
C stored_config(const Options& o, const ConfigMap& keys) {
  try {
    return C::read(keys);
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint '" + o.checkpoint + "': " + e.what());
  }
}

// Model keys only; training state is not compared on load.
ConfigMap model_keys(const ConfigMap& stored) {
  ConfigMap out;
  for (const auto& [k, v] : stored.values()) {
    if (k == "epoch" || k == "adam_step" || k == "lr" || k.starts_with("plateau_")) continue;
    out.set(k, v);
  }
  return out;
}

template <typename T>
void load_params(const std::string& dir, const ConfigMap& keys, TensorList<T>& params, TensorList<T>& buffers) {
  TensorList<T> all = params;
  all.insert(all.end(), buffers.begin(), buffers.end());
  load_checkpoint(dir, keys, all);
}

std::string data_manifest(const Options& o) {
  if (!o.data.empty()) {
    const fs::path p(o.data);
    return fs::is_directory(p) ? (p / "manifest.tsv").string() : p.string();
  }
  throw UsageError("--data MANIFEST (or a split directory) is required");
}

Vocabulary checkpoint_vocab(const Options& o) {
  const fs::path p = fs::path(o.checkpoint) / "vocab.txt";
  if (!fs::exists(p)) throw CheckpointError("checkpoint '" + o.checkpoint + "' has no vocab.txt");
  return Vocabulary::load(p.string());
}

template <typename T>
int run_eval(const Options& o) {
  const Restored r = read_model_config(o);
  const ConfigMap keys = model_keys(r.config);
  if (r.model == "sinet") {
    SinetModel<T> model(stored_config<SinetConfig>(o, keys));
    TensorList<T> params, buffers;
    model.collect(params, buffers);
    load_params(o.checkpoint, keys, params, buffers);
    const Dataset<T> data = load_dataset<T>(Manifest::load(data_manifest(o)), Task::kAction);
    const ActionEval e = evaluate_action(model, data);
    if (o.tsv) {
      std::printf("videos\tloss\ttop1\ttop5\n%zu\t%.6f\t%.6f\t%.6f\n", data.size(), e.loss, e.top1, e.top5);
    } else {
      std::printf("videos %zu  loss %.6f  top1 %.4f  top5 %.4f\n", data.size(), e.loss, e.top1, e.top5);
    }
    return kOk;
  }
  if (r.model == "caption") {
    CaptionModel<T> model(stored_config<CaptionConfig>(o, keys));
    TensorList<T> params, buffers;
    model.collect(params, buffers);
    load_params(o.checkpoint, keys, params, buffers);
    const Dataset<T> data = load_dataset<T>(Manifest::load(data_manifest(o)), Task::kCaption, checkpoint_vocab(o));
    DecodeOptions d;
    d.beam = o.beam;
    d.max_len = o.max_len;
    d.length_normalize = o.length_norm;
    const CaptionEval e = evaluate_caption(model, data, true, d);
    std::vector<Sentence> cands;
    std::vector<std::vector<Sentence>> refs;
    for (std::size_t i = 0; i < data.size(); ++i) {
      cands.push_back(data.vocab.decode(e.decodes[i]));
      refs.push_back({data.captions[i]});
    }
    const std::vector<double> b = bleu(cands, refs, 4);
    if (o.tsv) {
      std::printf("videos\tnll\tbleu1\tbleu2\tbleu3\tbleu4\trouge_l\texact\n");
      std::printf("%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", data.size(), e.nll, b[0], b[1], b[2], b[3],
                  e.rouge_l, e.exact);
    } else {
      std::printf("videos %zu  nll %.4f  B@1 %.4f  B@2 %.4f  B@3 %.4f  B@4 %.4f  ROUGE-L %.4f  exact %.4f\n",
                  data.size(), e.nll, b[0], b[1], b[2], b[3], e.rouge_l, e.exact);
    }
    return kOk;
  }
  throw CheckpointError("unknown model kind '" + r.model + "' in checkpoint");
}

template <typename T>
int run_decode(const Options& o) {
  const Restored r = read_model_config(o);
  if (r.model != "caption") throw UsageError("decode needs a caption checkpoint");
  const ConfigMap keys = model_keys(r.config);
  CaptionModel<T> model(stored_config<CaptionConfig>(o, keys));
  TensorList<T> params, buffers;
  model.collect(params, buffers);
  load_params(o.checkpoint, keys, params, buffers);
  const Vocabulary vocab = checkpoint_vocab(o);
  const Dataset<T> data = load_dataset<T>(Manifest::load(data_manifest(o)), Task::kCaption, vocab);
  DecodeOptions d;
  d.beam = o.beam;
  d.max_len = o.max_len;
  d.length_normalize = o.length_norm;
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::trunc);
    if (!file) throw IoError("cannot write '" + o.out + "'");
  }
  std::ostream& os = o.out.empty() ? std::cout : file;
  for (const VideoSample<T>& v : data.samples) {
    os << format_caption_line(v.id, decode_caption(model, v, d).words, vocab) << '\n';
  }
  return kOk;
}

int run_flops(const Options& o) {
  FlopTableParams p;
  p.objects = o.N.value_or(p.objects);
  p.timesteps = o.T.value_or(p.timesteps);
  p.feature_dim = o.d_in;
  p.hidden = o.d_hidden;
  std::vector<CostReport> rows;
  if (o.K) {
    rows.push_back(flop_hoi(p.objects, p.timesteps, *o.K, p.feature_dim, p.hidden));
    const std::vector<CostReport> table = flop_table(p);
    for (const CostReport& t : table) {
      if (t.design == rows.front().design && t.reference) rows.front().reference = t.reference;
    }
  } else {
    rows = flop_table(p);
  }
  std::fputs(format_flop_table(rows, o.tsv).c_str(), stdout);
  return kOk;
}

template <typename T>
int run_gradcheck(const Options& o, T h, double tol) {
  const std::vector<GradcheckReport> reports = sinet::run_gradcheck<T>(o.seeds, h, o.filter);
  double worst = 0.0;
  bool ok = true;
  if (o.tsv) std::printf("case\tseeds\tmax_rel_error\tstatus\n");
  for (const GradcheckReport& r : reports) {
    // Batch norm over a handful of objects leaves too little precision in
    // f32 for any step size, so those graphs are reported but not gated.
    const bool gated = std::is_same_v<T, double> || !(r.name.starts_with("sinet_") || r.name.starts_with("hoi_"));
    const bool pass = r.max_error < tol;
    const char* status = pass ? "ok" : gated ? "FAIL" : "info";
    if (gated) {
      ok = ok && pass;
      worst = std::max(worst, r.max_error);
    }
    if (o.tsv) {
      std::printf("%s\t%zu\t%.3e\t%s\n", r.name.c_str(), r.seeds, r.max_error, status);
    } else {
      std::printf("%-32s %3zu seeds  max rel error %.3e  %s\n", r.name.c_str(), r.seeds, r.max_error, status);
    }
  }
  std::printf("max relative error %.3e (tolerance %.1e, h %.1e): %s\n", worst, tol, static_cast<double>(h),
              ok ? "pass" : "FAIL");
  return ok ? kOk : kFailed;
}

// Generator settings from the config file, then --N / --T / --seed.
TriadConfig triad_settings(const Options& o, const ConfigMap& c) {
  TriadConfig t;
  t.seed = o.seed;
  t.classes = c.get_size("classes", t.classes);
  t.distractors = c.get_size("distractors", t.distractors);
  t.noise = c.get_double("noise", t.noise);
  t.timesteps = o.T.value_or(c.get_size("timesteps", t.timesteps));
  t.objects = o.N.value_or(c.get_size("objects", t.objects));
  t.dim = c.get_size("dim", t.dim);
  t.train = c.get_size("train", t.train);
  t.val = c.get_size("val", t.val);
  t.decoy_rate = c.get_double("decoy_rate", t.decoy_rate);
  t.tag_scale = c.get_double("tag_scale", t.tag_scale);
  t.validate();
  return t;
}

CaptionSynthConfig caption_settings(const Options& o, const ConfigMap& c) {
  CaptionSynthConfig t;
  t.seed = o.seed;
  t.subjects = c.get_size("subjects", t.subjects);
  t.verbs = c.get_size("verbs", t.verbs);
  t.objects_words = c.get_size("objects_words", t.objects_words);
  t.distractors = c.get_size("distractors", t.distractors);
  t.noise = c.get_double("noise", t.noise);
  t.timesteps = o.T.value_or(c.get_size("timesteps", t.timesteps));
  t.objects = o.N.value_or(c.get_size("objects", t.objects));
  t.dim = c.get_size("dim", t.dim);
  t.train = c.get_size("train", t.train);
  t.val = c.get_size("val", t.val);
  t.validate();
  return t;
}

template <typename T>
int run_synth(const Options& o) {
  if (o.out.empty()) throw UsageError("synth needs --out DIR");
  const Task task = task_of(o);
  const ConfigMap cfg = load_config(o);
  const SplitDataset<T> data =
      task == Task::kAction ? synth_triad<T>(triad_settings(o, cfg)) : synth_caption<T>(caption_settings(o, cfg));
  write_dataset((fs::path(o.out) / "train").string(), data.train, task);
  write_dataset((fs::path(o.out) / "val").string(), data.val, task);
  if (task == Task::kCaption) data.train.vocab.save((fs::path(o.out) / "vocab.txt").string());
  std::printf("wrote %zu train / %zu val videos to %s\n", data.train.size(), data.val.size(), o.out.c_str());
  return kOk;
}

template <typename F>
int with_precision(const Options& o, F&& f) {
  if (o.precision == "f32") return f(float{});
  if (o.precision == "f64") return f(double{});
  throw UsageError("--precision must be f32 or f64");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sinet: object-interaction video models"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* s) {
    s->add_option("--task", o.task, "action or caption")->check(CLI::IsMember({"action", "caption"}));
    s->add_option("--config", o.config, "key=value config file");
    s->add_option("--seed", o.seed, "random seed");
    s->add_option("--precision", o.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
    s->add_flag("--tsv", o.tsv, "tab-separated output");
  };
  auto model_flags = [&o](CLI::App* s) {
    s->add_option("--K", o.K, "interaction groups")->check(CLI::PositiveNumber);
    s->add_option("--selection", o.selection, "dotprod or alpha")->check(CLI::IsMember({"dotprod", "alpha"}));
    s->add_option("--mode", o.mode, "caption inputs")
        ->check(CLI::IsMember({"img", "obj", "img+obj", "img+obj+coattn"}));
    s->add_option("--fine", o.fine, "action fine branch")
        ->check(CLI::IsMember({"hoi", "meanpool", "pairs", "triplets"}));
    s->add_option("--hidden", o.hidden, "one width for every hidden layer")->check(CLI::PositiveNumber);
  };
  auto decode_flags = [&o](CLI::App* s) {
    s->add_option("--beam", o.beam, "beam size")->check(CLI::PositiveNumber);
    s->add_option("--max-len", o.max_len, "longest caption in words")->check(CLI::Range(1, 30));
    s->add_flag("--length-norm", o.length_norm, "rank beams by per-token log-probability");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  common(train);
  model_flags(train);
  train->add_option("--data", o.data, "directory with train/ and val/ manifests");
  train->add_option("--train", o.train_manifest, "training manifest");
  train->add_option("--val", o.val_manifest, "validation manifest");
  train->add_option("--lr", o.lr, "initial learning rate")->check(CLI::NonNegativeNumber);
  train->add_option("--batch", o.batch, "mini-batch size")->check(CLI::PositiveNumber);
  train->add_option("--epochs", o.epochs, "epochs")->check(CLI::PositiveNumber);
  train->add_option("--clip", o.clip, "global gradient-norm clip (0 = off)")->check(CLI::NonNegativeNumber);
  train->add_option("--patience", o.patience, "plateau patience in epochs")->check(CLI::PositiveNumber);
  train->add_option("--out", o.out, "output directory for checkpoints and metrics.tsv");
  train->add_option("--resume", o.resume, "checkpoint directory to continue from");
  train->add_flag("-v,--verbose", o.verbose, "per-epoch progress on stderr");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval);
  decode_flags(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  eval->add_option("--data", o.data, "manifest or split directory")->required();

  CLI::App* decode = app.add_subcommand("decode", "caption videos with a checkpoint");
  common(decode);
  decode_flags(decode);
  decode->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  decode->add_option("--data", o.data, "manifest or split directory")->required();
  decode->add_option("--out", o.out, "output file (default stdout)");

  CLI::App* flops = app.add_subcommand("flops", "per-video FLOP table");
  flops->add_option("--N", o.N, "objects per frame")->check(CLI::PositiveNumber);
  flops->add_option("--T", o.T, "timesteps")->check(CLI::PositiveNumber);
  flops->add_option("--K", o.K, "only the HOI design with K groups")->check(CLI::PositiveNumber);
  flops->add_option("--d", o.d_in, "object feature width")->check(CLI::PositiveNumber);
  flops->add_option("--hidden", o.d_hidden, "projection and LSTM width")->check(CLI::PositiveNumber);
  flops->add_flag("--tsv", o.tsv, "tab-separated output");

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
  common(synth);
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--N", o.N, "objects per frame")->check(CLI::PositiveNumber);
  synth->add_option("--T", o.T, "timesteps")->check(CLI::PositiveNumber);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--precision", o.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  gradcheck->add_option("--seeds", o.seeds, "random instances per case")->check(CLI::PositiveNumber);
  gradcheck->add_option("--filter", o.filter, "only cases whose name contains this");
  gradcheck->add_option("--tol", o.tolerance, "maximum relative error")->check(CLI::PositiveNumber);
  gradcheck->add_flag("--tsv", o.tsv, "tab-separated output");

  if (argc <= 1) {
    std::cerr << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train) return with_precision(o, [&](auto t) { return run_train<decltype(t)>(o); });
    if (*eval) return with_precision(o, [&](auto t) { return run_eval<decltype(t)>(o); });
    if (*decode) return with_precision(o, [&](auto t) { return run_decode<decltype(t)>(o); });
    if (*flops) return run_flops(o);
    if (*synth) return with_precision(o, [&](auto t) { return run_synth<decltype(t)>(o); });
    if (*gradcheck) {
      if (o.precision == "f64") return run_gradcheck<double>(o, 1e-5, o.tolerance.value_or(1e-4));
      return run_gradcheck<float>(o, 1e-2f, o.tolerance.value_or(5e-2));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
