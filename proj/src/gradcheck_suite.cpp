#include "sinet/gradcheck_suite.hpp"

#include <algorithm>
#include <memory>
#include <random>

#include "sinet/attention.hpp"
#include "sinet/caption.hpp"
#include "sinet/hoi.hpp"
#include "sinet/sinet.hpp"

namespace sinet {
namespace {

template <typename T>
Tensor<T> gaussian(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor<T> t(std::move(shape));
  for (T& v : t.storage()) v = static_cast<T>(scale * n01(rng));
  return t;
}

// Entries bounded away from zero so relu never sits on its kink.
template <typename T>
Tensor<T> off_kink(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.5);
  std::bernoulli_distribution sign(0.5);
  Tensor<T> t(std::move(shape));
  for (T& v : t.storage()) v = static_cast<T>(sign(rng) ? mag(rng) : -mag(rng));
  return t;
}

// Scalarizes y with a fixed random weighting so every output entry matters.
template <typename T>
Var<T> project(Graph<T>& g, Var<T> y, std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return reduce_sum(mul(y, g.constant(gaussian<T>(y.shape(), rng))));
}

template <typename T>
using Build = std::function<Var<T>(Graph<T>&, std::span<const Var<T>>)>;

template <typename T>
GradcheckCase op_case(std::string name, T h, std::function<std::vector<Tensor<T>>(Rng&)> point, Build<T> f) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            const std::vector<Tensor<T>> at = point(rng);
            LeafLossFn<T> loss = [&](Graph<T>& g, std::span<const Var<T>> x) { return project(g, f(g, x), seed); };
            return grad_check(loss, at, h);
          }};
}

template <typename T>
double check_model(TensorList<T>& params, const LossFn<T>& f, T h) {
  std::vector<Tensor<T>*> ptrs;
  for (NamedTensor<T>& p : params) ptrs.push_back(p.tensor);
  return grad_check_parameters(f, std::span<Tensor<T>* const>(ptrs), h);
}

// Gives batch-norm affine parameters non-trivial values.
template <typename T>
void perturb_norms(TensorList<T>& params, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (NamedTensor<T>& p : params) {
    const bool gamma = p.name.ends_with(".gamma");
    const bool beta = p.name.ends_with(".beta") || p.name.ends_with(".bias");
    if (!gamma && !beta) continue;
    for (T& v : p.tensor->storage()) v = static_cast<T>(gamma ? 1.0 + 0.3 * n01(rng) : 0.3 * n01(rng));
  }
}

template <typename T>
VideoSample<T> toy_video(std::size_t steps, std::size_t objects, std::size_t dim, Rng& rng, bool mask_one) {
  VideoSample<T> v;
  v.id = "toy";
  v.frames = gaussian<T>({steps, dim}, rng);
  for (std::size_t t = 0; t < steps; ++t) {
    v.objects.push_back(gaussian<T>({objects, dim}, rng));
    Mask m;
    if (mask_one && t == 0 && objects > 2) {
      m.assign(objects, true);
      m[objects - 1] = false;
    }
    v.masks.push_back(m);
  }
  return v;
}

template <typename T>
GradcheckCase sinet_case(FineBranch fine, Selection sel, T h) {
  const std::string name = "sinet_" + fine_branch_name(fine) + (fine == FineBranch::kHoi ? "_" + selection_name(sel) : "");
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            SinetConfig c;
            c.feature_dim = 8;
            c.phi_widths = {8};
            c.fine = fine;
            c.groups = 2;
            c.selection = sel;
            c.theta_widths = {8, 8};
            c.lstm_hidden = 8;
            c.num_classes = 4;
            SinetModel<T> model(c);
            model.init(rng);
            TensorList<T> params, buffers;
            model.collect(params, buffers);
            perturb_norms(params, rng);
            std::vector<VideoSample<T>> videos;
            std::uniform_int_distribution<std::size_t> label(0, c.num_classes - 1);
            for (std::size_t i = 0; i < 3; ++i) {
              videos.push_back(toy_video<T>(2, 3, c.feature_dim, rng, i == 1 && fine != FineBranch::kTriplets));
              videos.back().label = label(rng);
            }
            std::vector<const VideoSample<T>*> batch;
            for (const auto& v : videos) batch.push_back(&v);
            Rng drop(seed);
            LossFn<T> f = [&](Graph<T>& g) {
              return model.loss(g, std::span<const VideoSample<T>* const>(batch), Pass::train(drop));
            };
            return check_model(params, f, h);
          }};
}

template <typename T>
GradcheckCase hoi_case(Selection sel, T h) {
  return {"hoi_rollout_" + selection_name(sel), [=](std::uint64_t seed) {
            Rng rng(seed);
            HoiConfig c;
            c.groups = 2;
            c.object_dim = 6;
            c.context_dim = 5;
            c.projection_widths = {6, 6};
            c.lstm_hidden = 7;
            c.selection = sel;
            HoiModule<T> hoi(c);
            hoi.init(rng);
            TensorList<T> params, buffers;
            hoi.collect("hoi", params, buffers);
            perturb_norms(params, rng);
            const VideoSample<T> v = toy_video<T>(3, 4, c.object_dim, rng, true);
            const ObjectSequence<T> seq = ObjectSequence<T>::from_sample(v);
            const Tensor<T> contexts = gaussian<T>({c.context_dim, 3}, rng);
            Rng drop(seed);
            LossFn<T> f = [&](Graph<T>& g) {
              HoiRollout<T> r = hoi.rollout(g, seq, g.constant(contexts), Pass::train(drop));
              Var<T> total = project(g, r.final_h, seed);
              for (const Var<T>& s : r.per_step_h) total = add(total, project(g, s, seed + 1));
              return total;
            };
            return check_model(params, f, h);
          }};
}

template <typename T>
GradcheckCase caption_case(CaptionMode mode, T h) {
  return {"caption_nll_" + caption_mode_name(mode), [=](std::uint64_t seed) {
            Rng rng(seed);
            CaptionConfig c;
            c.feature_dim = 6;
            c.phi_dim = 5;
            c.phi_dropout = 0.0;
            c.groups = 2;
            c.theta_widths = {4};
            c.theta_dropout = 0.0;
            c.hoi_hidden = 5;
            c.vocab_size = 7;
            c.embed_dim = 4;
            c.embed_dropout = 0.0;
            c.attn_hidden = 5;
            c.lang_hidden = 4;
            c.attention_dim = 3;
            c.mode = mode;
            CaptionModel<T> model(c);
            model.init(rng);
            TensorList<T> params, buffers;
            model.collect(params, buffers);
            perturb_norms(params, rng);
            std::vector<VideoSample<T>> videos;
            for (std::size_t i = 0; i < 2; ++i) {
              videos.push_back(toy_video<T>(3, 3, c.feature_dim, rng, i == 0));
              videos.back().caption = {Vocabulary::kBos, 4, 6, 5, Vocabulary::kEos};
            }
            videos[1].caption = {Vocabulary::kBos, 5, Vocabulary::kEos};
            std::vector<const VideoSample<T>*> batch;
            for (const auto& v : videos) batch.push_back(&v);
            Rng drop(seed);
            LossFn<T> f = [&](Graph<T>& g) {
              return model.loss(g, std::span<const VideoSample<T>* const>(batch), Pass::train(drop));
            };
            return check_model(params, f, h);
          }};
}

}  // namespace

template <typename T>
std::vector<GradcheckCase> gradcheck_cases(T h) {
  using V = std::vector<Tensor<T>>;
  using X = std::span<const Var<T>>;
  std::vector<GradcheckCase> cases;
  auto add_op = [&](std::string name, std::function<V(Rng&)> point, Build<T> f) {
    cases.push_back(op_case<T>(std::move(name), h, std::move(point), std::move(f)));
  };

  add_op("matmul", [](Rng& r) { return V{gaussian<T>({3, 4}, r), gaussian<T>({4, 5}, r)}; },
         [](Graph<T>&, X x) { return matmul(x[0], x[1]); });
  add_op("matvec", [](Rng& r) { return V{gaussian<T>({3, 4}, r), gaussian<T>({4}, r)}; },
         [](Graph<T>&, X x) { return matmul(x[0], x[1]); });
  add_op("transpose", [](Rng& r) { return V{gaussian<T>({3, 5}, r)}; },
         [](Graph<T>&, X x) { return transpose(x[0]); });
  add_op("row_softmax", [](Rng& r) { return V{gaussian<T>({3, 5}, r, 2.0)}; },
         [](Graph<T>&, X x) { return row_softmax(x[0]); });
  add_op("softmax_vector", [](Rng& r) { return V{gaussian<T>({6}, r, 2.0)}; },
         [](Graph<T>&, X x) { return row_softmax(x[0]); });
  add_op("tanh", [](Rng& r) { return V{gaussian<T>({4, 3}, r)}; }, [](Graph<T>&, X x) { return tanh(x[0]); });
  add_op("sigmoid", [](Rng& r) { return V{gaussian<T>({4, 3}, r)}; },
         [](Graph<T>&, X x) { return sigmoid(x[0]); });
  add_op("relu", [](Rng& r) { return V{off_kink<T>({4, 3}, r)}; }, [](Graph<T>&, X x) { return relu(x[0]); });
  add_op("add", [](Rng& r) { return V{gaussian<T>({3, 4}, r), gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return add(x[0], x[1]); });
  add_op("sub", [](Rng& r) { return V{gaussian<T>({3, 4}, r), gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return sub(x[0], x[1]); });
  add_op("mul", [](Rng& r) { return V{gaussian<T>({3, 4}, r), gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return mul(x[0], x[1]); });
  add_op("scale", [](Rng& r) { return V{gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return scale(x[0], T(-1.7)); });
  add_op("broadcast_add", [](Rng& r) { return V{gaussian<T>({3}, r), gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return broadcast_add(x[0], x[1]); });
  add_op("broadcast_mul", [](Rng& r) { return V{gaussian<T>({3}, r), gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return broadcast_mul(x[0], x[1]); });
  add_op("reduce_mean_rows", [](Rng& r) { return V{gaussian<T>({4, 3}, r)}; },
         [](Graph<T>&, X x) { return reduce_mean_rows(x[0]); });
  add_op("reduce_sum", [](Rng& r) { return V{gaussian<T>({4, 3}, r)}; },
         [](Graph<T>&, X x) { return reduce_sum(x[0]); });
  add_op("concat_vectors", [](Rng& r) { return V{gaussian<T>({3}, r), gaussian<T>({2}, r), gaussian<T>({4}, r)}; },
         [](Graph<T>&, X x) { return concat(x, 0); });
  add_op("concat_rows", [](Rng& r) { return V{gaussian<T>({2, 3}, r), gaussian<T>({4, 3}, r)}; },
         [](Graph<T>&, X x) { return concat(x, 0); });
  add_op("concat_columns", [](Rng& r) { return V{gaussian<T>({3, 2}, r), gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return concat(x, 1); });
  add_op("slice_rows", [](Rng& r) { return V{gaussian<T>({5, 3}, r)}; },
         [](Graph<T>&, X x) { return slice(x[0], 0, 1, 4); });
  add_op("slice_columns", [](Rng& r) { return V{gaussian<T>({3, 5}, r)}; },
         [](Graph<T>&, X x) { return slice(x[0], 1, 2, 5); });
  add_op("reshape", [](Rng& r) { return V{gaussian<T>({3, 4}, r)}; },
         [](Graph<T>&, X x) { return reshape(x[0], Shape{2, 6}); });
  add_op("stack_columns", [](Rng& r) { return V{gaussian<T>({3}, r), gaussian<T>({3}, r)}; },
         [](Graph<T>&, X x) { return stack_columns<T>(x); });
  add_op("cross_entropy", [](Rng& r) { return V{gaussian<T>({5}, r, 2.0)}; },
         [](Graph<T>&, X x) {
           const std::size_t y[] = {3};
           return cross_entropy(x[0], std::span<const std::size_t>(y));
         });
  add_op("cross_entropy_batch", [](Rng& r) { return V{gaussian<T>({4, 3}, r, 2.0)}; },
         [](Graph<T>&, X x) {
           const std::size_t y[] = {0, 3, 1};
           return cross_entropy(x[0], std::span<const std::size_t>(y));
         });
  add_op("batch_norm_train",
         [](Rng& r) {
           return V{gaussian<T>({3, 5}, r), off_kink<T>({3}, r), gaussian<T>({3}, r)};
         },
         [](Graph<T>&, X x) { return batch_norm_train(x[0], x[1], x[2], T(1e-5)); });
  add_op("batch_norm_eval",
         [](Rng& r) { return V{gaussian<T>({3, 5}, r), gaussian<T>({3}, r), gaussian<T>({3}, r)}; },
         [](Graph<T>&, X x) {
           const Tensor<T> mean = Tensor<T>::vector({T(0.2), T(-0.5), T(1.0)});
           const Tensor<T> var = Tensor<T>::vector({T(0.5), T(2.0), T(1.3)});
           return batch_norm_eval(x[0], x[1], x[2], mean, var, T(1e-5));
         });
  add_op("gather_row", [](Rng& r) { return V{gaussian<T>({5, 3}, r)}; },
         [](Graph<T>&, X x) { return gather_row(x[0], 2); });

  add_op("dot_product_attend_masked", [](Rng& r) { return V{gaussian<T>({4, 5}, r), gaussian<T>({3, 5}, r)}; },
         [](Graph<T>&, X x) {
           const Mask m = {true, true, false, true, true};
           return dot_product_attend(x[0], x[1], m, T(2)).attended;
         });
  add_op("alpha_attend_masked",
         [](Rng& r) { return V{gaussian<T>({4, 5}, r), gaussian<T>({3, 5}, r), gaussian<T>({4}, r)}; },
         [](Graph<T>&, X x) {
           const Mask m = {true, false, true, true, true};
           return alpha_attend(x[0], x[1], x[2], m).attended;
         });
  add_op("sdp_temporal", [](Rng& r) { return V{gaussian<T>({4, 3}, r)}; },
         [](Graph<T>&, X x) { return sdp_temporal(x[0]).attended; });
  auto cell = std::make_shared<LstmCell<T>>(3, 4);
  {
    Rng init(17);
    cell->init(init);
  }
  add_op("lstm_step", [](Rng& r) { return V{gaussian<T>({3}, r), gaussian<T>({4}, r), gaussian<T>({4}, r)}; },
         [cell](Graph<T>& g, X x) {
           const LstmState<T> s = cell->step(g, x[0], {x[1], x[2]});
           return concat({s.h, s.c}, 0);
         });

  for (Selection sel : {Selection::kDotProduct, Selection::kAlpha}) cases.push_back(hoi_case<T>(sel, h));
  for (FineBranch fine : {FineBranch::kHoi, FineBranch::kMeanPool, FineBranch::kPairs, FineBranch::kTriplets}) {
    cases.push_back(sinet_case<T>(fine, Selection::kDotProduct, h));
  }
  cases.push_back(sinet_case<T>(FineBranch::kHoi, Selection::kAlpha, h));
  for (CaptionMode mode : {CaptionMode::kCoAttention, CaptionMode::kNoCoAttention, CaptionMode::kImageOnly,
                           CaptionMode::kObjectOnly}) {
    cases.push_back(caption_case<T>(mode, h));
  }
  return cases;
}

template <typename T>
std::vector<GradcheckReport> run_gradcheck(std::size_t seeds, T h, const std::string& filter, std::uint64_t first_seed) {
  if (seeds == 0) throw ConfigError("gradcheck: need at least one seed");
  std::vector<GradcheckReport> out;
  for (const GradcheckCase& c : gradcheck_cases<T>(h)) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    GradcheckReport r{c.name, 0.0, seeds};
    for (std::size_t s = 0; s < seeds; ++s) r.max_error = std::max(r.max_error, c.run(first_seed + s));
    out.push_back(r);
  }
  if (out.empty()) throw ConfigError("gradcheck: no case matches '" + filter + "'");
  return out;
}

#define SINET_INSTANTIATE_GRADCHECK_SUITE(T)                       \
  template std::vector<GradcheckCase> gradcheck_cases<T>(T);       \
  template std::vector<GradcheckReport> run_gradcheck<T>(std::size_t, T, const std::string&, std::uint64_t);

SINET_INSTANTIATE_GRADCHECK_SUITE(float)
SINET_INSTANTIATE_GRADCHECK_SUITE(double)

#undef SINET_INSTANTIATE_GRADCHECK_SUITE

}  // namespace sinet
