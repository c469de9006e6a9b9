#pragma once

// Small fixtures shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <random>
#include <vector>

#include "sinet/caption.hpp"
#include "sinet/sinet.hpp"

namespace sinet::testing {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(shape);
  for (T& v : t.storage()) v = static_cast<T>(u(rng));
  return t;
}

// Integer-valued entries in [-bound, bound].
template <typename T>
Tensor<T> random_integer_tensor(const Shape& shape, Rng& rng, long bound) {
  std::uniform_int_distribution<long> u(-bound, bound);
  Tensor<T> t(shape);
  for (T& v : t.storage()) v = static_cast<T>(u(rng));
  return t;
}

// Triple loop; accumulates in T.
template <typename T>
Tensor<T> naive_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> c(b.rank() == 1 ? Shape{m} : Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// A video of `t` frames with `n` objects each, features in [-1, 1].
template <typename T>
VideoSample<T> random_video(std::size_t t, std::size_t n, std::size_t m, Rng& rng) {
  VideoSample<T> v;
  v.id = "v";
  v.frames = random_tensor<T>({t, m}, rng);
  for (std::size_t i = 0; i < t; ++i) {
    v.objects.push_back(random_tensor<T>({n, m}, rng));
    v.masks.emplace_back();
  }
  return v;
}

inline SinetConfig toy_sinet_config(std::size_t dim, std::size_t hidden, std::size_t classes,
                                    FineBranch fine = FineBranch::kHoi,
                                    Selection sel = Selection::kDotProduct) {
  SinetConfig c;
  c.feature_dim = dim;
  c.phi_widths = {hidden};
  c.theta_widths = {hidden, hidden, hidden};
  c.lstm_hidden = hidden;
  c.num_classes = classes;
  c.fine = fine;
  c.selection = sel;
  return c;
}

inline CaptionConfig toy_caption_config(std::size_t dim, std::size_t hidden, std::size_t vocab,
                                        CaptionMode mode = CaptionMode::kCoAttention) {
  CaptionConfig c;
  c.feature_dim = dim;
  c.phi_dim = hidden;
  c.phi_dropout = 0.0;
  c.theta_widths = {hidden};
  c.theta_dropout = 0.0;
  c.hoi_hidden = hidden;
  c.vocab_size = vocab;
  c.embed_dim = hidden;
  c.embed_dropout = 0.0;
  c.attn_hidden = hidden;
  c.lang_hidden = hidden;
  c.attention_dim = hidden;
  c.mode = mode;
  return c;
}

template <typename T>
std::vector<const VideoSample<T>*> pointers(const std::vector<VideoSample<T>>& videos) {
  std::vector<const VideoSample<T>*> out;
  for (const auto& v : videos) out.push_back(&v);
  return out;
}

}  // namespace sinet::testing
