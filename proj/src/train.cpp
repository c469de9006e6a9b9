#include "sinet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace sinet {

template <typename T>
void AdamState<T>::reset(const TensorList<T>& params) {
  m.clear();
  v.clear();
  for (const NamedTensor<T>& p : params) {
    m.emplace_back(p.tensor->shape());
    v.emplace_back(p.tensor->shape());
  }
  step = 0;
}

template <typename T>
TensorList<T> AdamState<T>::named(const TensorList<T>& params) {
  if (m.size() != params.size()) reset(params);
  TensorList<T> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({params[i].name + ".m", &m[i]});
    out.push_back({params[i].name + ".v", &v[i]});
  }
  return out;
}

template <typename T>
void adam_step(AdamState<T>& s, const TensorList<T>& params, std::span<const Tensor<T>> grads, double clip_norm) {
  if (grads.size() != params.size()) throw ShapeError("adam: gradient count does not match parameters");
  if (s.m.size() != params.size()) s.reset(params);
  double sq = 0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i].tensor->shape()) {
      throw ShapeError("adam: gradient of '" + params[i].name + "' has the wrong shape");
    }
    for (T g : grads[i].storage()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient for '" + params[i].name + "'");
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  const double gscale = (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i].tensor;
    Tensor<T>& m = s.m[i];
    Tensor<T>& v = s.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = static_cast<double>(grads[i][j]) * gscale;
      const double mj = s.beta1 * static_cast<double>(m[j]) + (1.0 - s.beta1) * g;
      const double vj = s.beta2 * static_cast<double>(v[j]) + (1.0 - s.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = s.lr * (mj / c1) / (std::sqrt(vj / c2) + s.eps);
      p[j] = static_cast<T>(static_cast<double>(p[j]) - update);
    }
  }
}

double PlateauSchedule::update(double val_loss) {
  if (val_loss < best - threshold) {
    best = val_loss;
    bad_epochs = 0;
    return lr;
  }
  best = std::min(best, val_loss);
  if (++bad_epochs >= patience) {
    lr *= factor;
    bad_epochs = 0;
    ++drops;
  }
  return lr;
}

std::string format_metric_log(const std::vector<EpochRecord>& log) {
  std::string out = "epoch\ttrain_loss\tval_loss\tmetric\tlr\n";
  char buf[160];
  for (const EpochRecord& r : log) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.17g\n", r.epoch, r.train_loss, r.val_loss, r.metric,
                  r.lr);
    out += buf;
  }
  return out;
}

std::vector<EpochRecord> read_metric_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metric log '" + path + "'");
  std::vector<EpochRecord> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    if (std::sscanf(line.c_str(), "%zu\t%lf\t%lf\t%lf\t%lf", &r.epoch, &r.train_loss, &r.val_loss, &r.metric,
                    &r.lr) != 5) {
      throw FormatError("metric log '" + path + "': malformed row '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

template <typename T>
void write_checkpoint(const std::string& dir, TrainHooks<T>& hooks, AdamState<T>& adam,
                      const PlateauSchedule& sched, std::size_t epoch, const std::vector<EpochRecord>& log) {
  ConfigMap cfg = hooks.model_config;
  cfg.set("epoch", epoch);
  cfg.set("adam_step", adam.step);
  cfg.set("lr", adam.lr);
  cfg.set("plateau_best", sched.best);
  cfg.set("plateau_bad_epochs", sched.bad_epochs);
  cfg.set("plateau_drops", sched.drops);
  TensorList<T> all = hooks.params;
  all.insert(all.end(), hooks.buffers.begin(), hooks.buffers.end());
  if (fs::exists(dir)) fs::remove_all(dir);
  save_checkpoint(dir, cfg, all, adam.named(hooks.params));
  std::ofstream out(fs::path(dir) / "metrics.tsv", std::ios::trunc);
  out << format_metric_log(log);
  out.close();
  if (hooks.on_checkpoint) hooks.on_checkpoint(dir);
}

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix(seed ^ mix(epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

Rng batch_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
  return Rng(mix(mix(seed) ^ mix((epoch + 1) * 0x100000001B3ull + batch)));
}

template <typename T>
double train_step(TrainHooks<T>& hooks, AdamState<T>& adam, std::span<const VideoSample<T>* const> batch, Rng& rng,
                  double clip_norm) {
  Graph<T> g;
  Var<T> loss = hooks.loss(g, batch, Pass::train(rng));
  const double value = static_cast<double>(loss.value().item());
  if (!std::isfinite(value)) throw NumericError("training loss is not finite");
  g.backward(loss);
  std::vector<Tensor<T>> grads;
  grads.reserve(hooks.params.size());
  for (const NamedTensor<T>& p : hooks.params) grads.push_back(g.parameter_grad(*p.tensor));
  adam_step(adam, hooks.params, std::span<const Tensor<T>>(grads), clip_norm);
  return value;
}

template <typename T>
TrainResult train_loop(TrainHooks<T>& hooks, const Dataset<T>& train, const TrainOptions& opt) {
  if (train.empty()) throw EmptyInputError("training set is empty");
  if (opt.batch == 0) throw ConfigError("batch size must be at least 1");
  if (!(opt.lr >= 0)) throw ConfigError("learning rate must be non-negative");

  AdamState<T> adam;
  adam.lr = opt.lr;
  adam.reset(hooks.params);
  PlateauSchedule sched;
  sched.lr = opt.lr;
  sched.patience = opt.patience;
  TrainResult result;
  std::size_t first_epoch = 1;

  if (!opt.resume_dir.empty()) {
    TensorList<T> all = hooks.params;
    all.insert(all.end(), hooks.buffers.begin(), hooks.buffers.end());
    load_checkpoint(opt.resume_dir, hooks.model_config, all, adam.named(hooks.params));
    const ConfigMap stored = read_checkpoint_config(opt.resume_dir);
    first_epoch = stored.get_size("epoch") + 1;
    adam.step = stored.get_size("adam_step");
    adam.lr = sched.lr = stored.get_double("lr");
    sched.best = stored.get_double("plateau_best");
    sched.bad_epochs = stored.get_size("plateau_bad_epochs");
    sched.drops = stored.get_size("plateau_drops");
    result.log = read_metric_log((fs::path(opt.resume_dir) / "metrics.tsv").string());
    for (const EpochRecord& r : result.log) {
      if (r.val_loss < result.best_val_loss) {
        result.best_val_loss = r.val_loss;
        result.best_epoch = r.epoch;
      }
    }
  }

  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
  const std::size_t min_batch = std::max<std::size_t>(1, opt.min_batch);

  for (std::size_t epoch = first_epoch; epoch <= opt.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(train.size(), opt.seed, epoch);
    double loss_sum = 0;
    std::size_t loss_count = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + opt.batch);
      if (end - start < min_batch) continue;
      std::vector<const VideoSample<T>*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train.samples[order[i]]);
      Rng rng = batch_rng(opt.seed, epoch, batch_index);
      const double loss = train_step(hooks, adam, std::span<const VideoSample<T>* const>(batch), rng, opt.clip_norm);
      loss_sum += loss * static_cast<double>(batch.size());
      loss_count += batch.size();
    }
    if (loss_count == 0) throw EmptyInputError("no training batch reaches the minimum batch size");
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_count);
    auto [val_loss, metric] = hooks.evaluate();
    if (!std::isfinite(val_loss)) throw NumericError("validation loss is not finite at epoch " + std::to_string(epoch));
    rec.val_loss = val_loss;
    rec.metric = metric;
    rec.lr = adam.lr;
    result.log.push_back(rec);
    const bool best = val_loss < result.best_val_loss;
    if (best) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
    }
    adam.lr = sched.update(val_loss);
    if (!opt.out_dir.empty()) {
      write_checkpoint((fs::path(opt.out_dir) / "last").string(), hooks, adam, sched, epoch, result.log);
      if (best) write_checkpoint((fs::path(opt.out_dir) / "best").string(), hooks, adam, sched, epoch, result.log);
      std::ofstream log(fs::path(opt.out_dir) / "metrics.tsv", std::ios::trunc);
      log << format_metric_log(result.log);
    }
    if (opt.verbose) {
      std::fprintf(stderr, "epoch %zu  train %.5f  val %.5f  %s %.4f  lr %.3g\n", epoch, rec.train_loss, val_loss,
                   opt.metric_name.c_str(), metric, rec.lr);
    }
  }
  return result;
}

#define SINET_INSTANTIATE_TRAIN(T)                                                                             \
  template struct AdamState<T>;                                                                                \
  template void adam_step<T>(AdamState<T>&, const TensorList<T>&, std::span<const Tensor<T>>, double);         \
  template double train_step<T>(TrainHooks<T>&, AdamState<T>&, std::span<const VideoSample<T>* const>, Rng&,   \
                                double);                                                                       \
  template TrainResult train_loop<T>(TrainHooks<T>&, const Dataset<T>&, const TrainOptions&);

SINET_INSTANTIATE_TRAIN(float)
SINET_INSTANTIATE_TRAIN(double)

#undef SINET_INSTANTIATE_TRAIN

}  // namespace sinet
