#include "sinet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sinet/kernels.hpp"

namespace sinet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Graph

template <typename T>
Var<T> Graph<T>::push(Node node) {
  if (consumed_) throw GraphError("graph already consumed by backward()");
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node node;
  node.kind = OpKind::kConstant;
  node.value = std::move(value);
  return push(std::move(node));
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value) {
  Node node;
  node.kind = OpKind::kLeaf;
  node.requires_grad = record_gradients_;
  node.value = std::move(value);
  return push(std::move(node));
}

template <typename T>
Var<T> Graph<T>::parameter(const Tensor<T>& param) {
  auto it = parameter_ids_.find(&param);
  if (it != parameter_ids_.end()) return Var<T>(this, it->second);
  Node node;
  node.kind = OpKind::kParameter;
  node.requires_grad = record_gradients_;
  node.value = param;
  Var<T> v = push(std::move(node));
  parameter_ids_.emplace(&param, v.id());
  return v;
}

template <typename T>
Var<T> Graph<T>::record(OpKind kind, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                        BackwardFn backward) {
  return record(kind, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                std::move(backward));
}

template <typename T>
Var<T> Graph<T>::record(OpKind kind, Tensor<T> value, std::span<const Var<T>> inputs,
                        BackwardFn backward) {
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var<T>& in : inputs) {
    if (&in.graph() != this) throw GraphError("operand belongs to a different graph");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (record_gradients_ && node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

template <typename T>
Tensor<T>* Graph<T>::input_grad(std::uint32_t input_id) {
  Node& node = nodes_[input_id];
  if (!node.requires_grad) return nullptr;
  if (!node.has_grad) {
    node.grad = Tensor<T>(node.value.shape());
    node.has_grad = true;
  }
  return &node.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (!record_gradients_) throw GraphError("backward() on an evaluation-only graph");
  if (consumed_) throw GraphError("backward() called twice on the same graph");
  if (&loss.graph() != this) throw GraphError("loss belongs to a different graph");
  Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_string(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  root.grad = Tensor<T>(root.value.shape(), T(1));
  root.has_grad = true;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.has_grad && node.backward) node.backward(*this, static_cast<std::uint32_t>(i));
  }
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var<T> v) const {
  if (!consumed_) throw GraphError("grad() before backward()");
  const Node& node = nodes_.at(v.id());
  if (!node.requires_grad) throw GraphError("grad() of a node that does not require gradients");
  if (!node.has_grad) {
    auto& mutable_node = const_cast<Node&>(node);
    mutable_node.grad = Tensor<T>(node.value.shape());
    mutable_node.has_grad = true;
  }
  return node.grad;
}

template <typename T>
Tensor<T> Graph<T>::parameter_grad(const Tensor<T>& param) const {
  auto it = parameter_ids_.find(&param);
  if (it == parameter_ids_.end()) return Tensor<T>(param.shape());
  return grad(Var<T>(const_cast<Graph*>(this), it->second));
}

template class Graph<float>;
template class Graph<double>;

// ---------------------------------------------------------------------------
// Operations

namespace {

template <typename T>
const kernels::KernelTable<T>& kt() {
  return kernels::active<T>();
}

template <typename T>
void require_rank(const Var<T>& v, std::size_t rank, const char* op) {
  if (v.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(v.shape()));
  }
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src) {
  kt<T>().add(dst->data(), src.data(), dst->data(), src.size());
}

template <typename T>
void accumulate(Tensor<T>* dst, const T* src) {
  kt<T>().add(dst->data(), src, dst->data(), dst->size());
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Var<T> unary(Var<T> x, OpKind kind, Fwd fwd, Deriv deriv) {
  const Tensor<T>& in = x.value();
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return x.graph().record(kind, std::move(out), {x}, [deriv](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t xi = g.input(self, 0);
    Tensor<T>* dx = g.input_grad(xi);
    if (!dx) return;
    const Tensor<T>& xv = g.value(xi);
    const Tensor<T>& yv = g.value(self);
    const Tensor<T>& dy = g.output_grad(self);
    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_rank(a, 2, "matmul");
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const bool vec = b.shape().size() == 1;
  if (!vec) require_rank(b, 2, "matmul");
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t n = vec ? 1 : b.shape()[1];
  Tensor<T> out(vec ? Shape{m} : Shape{m, n});
  if (vec) {
    kernels::gemm<T>(false, true, m, 1, k, a.value().data(), b.value().data(), out.data(), false);
  } else {
    kernels::gemm<T>(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  }
  return a.graph().record(
      OpKind::kMatmul, std::move(out), {a, b}, [m, n, k, vec](Graph<T>& g, std::uint32_t self) {
        const std::uint32_t ai = g.input(self, 0);
        const std::uint32_t bi = g.input(self, 1);
        const Tensor<T>& dc = g.output_grad(self);
        if (Tensor<T>* da = g.input_grad(ai)) {
          // dA = dC * B^T
          if (vec) {
            kernels::gemm<T>(false, false, m, k, 1, dc.data(), g.value(bi).data(), da->data(), true);
          } else {
            kernels::gemm<T>(false, true, m, k, n, dc.data(), g.value(bi).data(), da->data(), true);
          }
        }
        if (Tensor<T>* db = g.input_grad(bi)) {
          // dB = A^T * dC
          const Tensor<T>& av = g.value(ai);
          if (vec) {
            for (std::size_t p = 0; p < m; ++p) kt<T>().axpy(dc[p], av.data() + p * k, db->data(), k);
          } else {
            kernels::gemm<T>(true, false, k, n, m, av.data(), dc.data(), db->data(), true);
          }
        }
      });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  const Tensor<T>& in = a.value();
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return a.graph().record(OpKind::kTranspose, std::move(out), {a},
                          [r, c](Graph<T>& g, std::uint32_t self) {
                            Tensor<T>* da = g.input_grad(g.input(self, 0));
                            if (!da) return;
                            const Tensor<T>& dy = g.output_grad(self);
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) (*da)[i * c + j] += dy[j * r + i];
                          });
}

template <typename T>
Var<T> row_softmax(Var<T> x) {
  const Tensor<T>& in = x.value();
  if (in.rank() != 1 && in.rank() != 2) {
    throw ShapeError("row_softmax: expected rank 1 or 2, got " + shape_string(in.shape()));
  }
  if (!in.all_finite()) throw NumericError("row_softmax: non-finite input");
  const std::size_t cols = in.rank() == 1 ? in.size() : in.shape()[1];
  const std::size_t rows = cols == 0 ? 0 : in.size() / cols;
  if (cols == 0) throw EmptyInputError("row_softmax: empty rows");
  Tensor<T> out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = in.data() + r * cols;
    T* dst = out.data() + r * cols;
    const T mx = *std::max_element(src, src + cols);
    T total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < cols; ++j) dst[j] *= inv;
  }
  return x.graph().record(OpKind::kRowSoftmax, std::move(out), {x},
                          [rows, cols](Graph<T>& g, std::uint32_t self) {
                            Tensor<T>* dx = g.input_grad(g.input(self, 0));
                            if (!dx) return;
                            const Tensor<T>& y = g.value(self);
                            const Tensor<T>& dy = g.output_grad(self);
                            // dx = y (.) (dy - <dy, y>)
                            for (std::size_t r = 0; r < rows; ++r) {
                              const T* yr = y.data() + r * cols;
                              const T* dyr = dy.data() + r * cols;
                              T* dxr = dx->data() + r * cols;
                              const T inner = kt<T>().dot(yr, dyr, cols);
                              for (std::size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - inner);
                            }
                          });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return unary<T>(
      x, OpKind::kTanh, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary<T>(
      x, OpKind::kSigmoid,
      [](T v) {
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary<T>(
      x, OpKind::kRelu, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  kt<T>().add(a.value().data(), b.value().data(), out.data(), out.size());
  return a.graph().record(OpKind::kAdd, std::move(out), {a, b}, [](Graph<T>& g, std::uint32_t self) {
    const Tensor<T>& dy = g.output_grad(self);
    if (Tensor<T>* da = g.input_grad(g.input(self, 0))) accumulate(da, dy);
    if (Tensor<T>* db = g.input_grad(g.input(self, 1))) accumulate(db, dy);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.graph().record(OpKind::kSub, std::move(out), {a, b}, [](Graph<T>& g, std::uint32_t self) {
    const Tensor<T>& dy = g.output_grad(self);
    if (Tensor<T>* da = g.input_grad(g.input(self, 0))) accumulate(da, dy);
    if (Tensor<T>* db = g.input_grad(g.input(self, 1))) kt<T>().axpy(T(-1), dy.data(), db->data(), dy.size());
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  kt<T>().mul(a.value().data(), b.value().data(), out.data(), out.size());
  return a.graph().record(OpKind::kMul, std::move(out), {a, b}, [](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t ai = g.input(self, 0);
    const std::uint32_t bi = g.input(self, 1);
    const Tensor<T>& dy = g.output_grad(self);
    if (Tensor<T>* da = g.input_grad(ai)) {
      const Tensor<T>& bv = g.value(bi);
      for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i] * bv[i];
    }
    if (Tensor<T>* db = g.input_grad(bi)) {
      const Tensor<T>& av = g.value(ai);
      for (std::size_t i = 0; i < dy.size(); ++i) (*db)[i] += dy[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out(x.shape());
  kt<T>().scale(factor, x.value().data(), out.data(), out.size());
  return x.graph().record(OpKind::kScale, std::move(out), {x}, [factor](Graph<T>& g, std::uint32_t self) {
    const Tensor<T>& dy = g.output_grad(self);
    if (Tensor<T>* dx = g.input_grad(g.input(self, 0))) kt<T>().axpy(factor, dy.data(), dx->data(), dy.size());
  });
}

template <typename T>
Var<T> broadcast_add(Var<T> vec, Var<T> mat) {
  require_rank(vec, 1, "broadcast_add");
  require_rank(mat, 2, "broadcast_add");
  const std::size_t d = mat.shape()[0];
  const std::size_t n = mat.shape()[1];
  if (vec.shape()[0] != d) {
    throw ShapeError("broadcast_add: " + shape_string(vec.shape()) + " vs " + shape_string(mat.shape()));
  }
  const Tensor<T>& v = vec.value();
  const Tensor<T>& m = mat.value();
  Tensor<T> out(m.shape());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i] + m[i * n + j];
  return vec.graph().record(OpKind::kBroadcastAdd, std::move(out), {vec, mat},
                            [d, n](Graph<T>& g, std::uint32_t self) {
                              const Tensor<T>& dy = g.output_grad(self);
                              if (Tensor<T>* dv = g.input_grad(g.input(self, 0))) {
                                for (std::size_t i = 0; i < d; ++i) (*dv)[i] += kt<T>().sum(dy.data() + i * n, n);
                              }
                              if (Tensor<T>* dm = g.input_grad(g.input(self, 1))) accumulate(dm, dy);
                            });
}

template <typename T>
Var<T> broadcast_mul(Var<T> vec, Var<T> mat) {
  require_rank(vec, 1, "broadcast_mul");
  require_rank(mat, 2, "broadcast_mul");
  const std::size_t d = mat.shape()[0];
  const std::size_t n = mat.shape()[1];
  if (vec.shape()[0] != d) {
    throw ShapeError("broadcast_mul: " + shape_string(vec.shape()) + " vs " + shape_string(mat.shape()));
  }
  const Tensor<T>& v = vec.value();
  const Tensor<T>& m = mat.value();
  Tensor<T> out(m.shape());
  for (std::size_t i = 0; i < d; ++i) kt<T>().scale(v[i], m.data() + i * n, out.data() + i * n, n);
  return vec.graph().record(OpKind::kBroadcastMul, std::move(out), {vec, mat},
                            [d, n](Graph<T>& g, std::uint32_t self) {
                              const std::uint32_t vi = g.input(self, 0);
                              const std::uint32_t mi = g.input(self, 1);
                              const Tensor<T>& dy = g.output_grad(self);
                              if (Tensor<T>* dv = g.input_grad(vi)) {
                                const Tensor<T>& m = g.value(mi);
                                for (std::size_t i = 0; i < d; ++i)
                                  (*dv)[i] += kt<T>().dot(dy.data() + i * n, m.data() + i * n, n);
                              }
                              if (Tensor<T>* dm = g.input_grad(mi)) {
                                const Tensor<T>& v = g.value(vi);
                                for (std::size_t i = 0; i < d; ++i)
                                  kt<T>().axpy(v[i], dy.data() + i * n, dm->data() + i * n, n);
                              }
                            });
}

template <typename T>
Var<T> reduce_mean_rows(Var<T> x) {
  require_rank(x, 2, "reduce_mean_rows");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  if (m == 0) throw EmptyInputError("reduce_mean_rows: zero rows");
  const Tensor<T>& in = x.value();
  Tensor<T> out({n});
  for (std::size_t i = 0; i < m; ++i) kt<T>().add(out.data(), in.data() + i * n, out.data(), n);
  kt<T>().scale(T(1) / static_cast<T>(m), out.data(), out.data(), n);
  return x.graph().record(OpKind::kReduceMeanRows, std::move(out), {x},
                          [m, n](Graph<T>& g, std::uint32_t self) {
                            Tensor<T>* dx = g.input_grad(g.input(self, 0));
                            if (!dx) return;
                            const Tensor<T>& dy = g.output_grad(self);
                            const T inv = T(1) / static_cast<T>(m);
                            for (std::size_t i = 0; i < m; ++i) kt<T>().axpy(inv, dy.data(), dx->data() + i * n, n);
                          });
}

template <typename T>
Var<T> reduce_sum(Var<T> x) {
  const Tensor<T>& in = x.value();
  Tensor<T> out = Tensor<T>::scalar(kt<T>().sum(in.data(), in.size()));
  return x.graph().record(OpKind::kReduceSum, std::move(out), {x}, [](Graph<T>& g, std::uint32_t self) {
    Tensor<T>* dx = g.input_grad(g.input(self, 0));
    if (!dx) return;
    const T d = g.output_grad(self)[0];
    for (T& v : dx->storage()) v += d;
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw EmptyInputError("concat: no parts");
  const Shape& first = parts[0].shape();
  const std::size_t rank = first.size();
  if (rank != 1 && rank != 2) throw ShapeError("concat: expected rank 1 or 2 parts");
  if (axis >= rank) throw ShapeError("concat: axis out of range");
  // Describe every part as [outer x (len * inner)] blocks along the axis.
  const std::size_t outer = (rank == 2 && axis == 1) ? first[0] : 1;
  std::vector<std::size_t> widths;  // contiguous run length per outer row
  std::size_t total_axis = 0;
  for (const Var<T>& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != rank) throw ShapeError("concat: rank mismatch");
    for (std::size_t a = 0; a < rank; ++a) {
      if (a != axis && s[a] != first[a]) {
        throw ShapeError("concat: extent mismatch " + shape_string(s) + " vs " + shape_string(first));
      }
    }
    total_axis += s[axis];
    widths.push_back(p.value().size() / std::max<std::size_t>(outer, 1));
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  Tensor<T> out(out_shape);
  std::size_t row_width = 0;
  for (std::size_t w : widths) row_width += w;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor<T>& src = parts[p].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * widths[p], widths[p], out.data() + o * row_width + offset);
    }
    offset += widths[p];
  }
  return parts[0].graph().record(
      OpKind::kConcat, std::move(out), parts,
      [widths, outer, row_width](Graph<T>& g, std::uint32_t self) {
        const Tensor<T>& dy = g.output_grad(self);
        std::size_t offset = 0;
        for (std::size_t p = 0; p < widths.size(); ++p) {
          if (Tensor<T>* dp = g.input_grad(g.input(self, p))) {
            for (std::size_t o = 0; o < outer; ++o) {
              kt<T>().add(dp->data() + o * widths[p], dy.data() + o * row_width + offset,
                          dp->data() + o * widths[p], widths[p]);
            }
          }
          offset += widths[p];
        }
      });
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || s.size() > 2) throw ShapeError("slice: bad axis for " + shape_string(s));
  if (begin > end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + shape_string(s));
  }
  const std::size_t outer = (s.size() == 2 && axis == 1) ? s[0] : 1;
  const std::size_t inner = (s.size() == 2 && axis == 0) ? s[1] : 1;
  const std::size_t stride = s[axis] * inner;  // per outer row
  const std::size_t run = (end - begin) * inner;
  const std::size_t start = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor<T> out(out_shape);
  const Tensor<T>& in = x.value();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(in.data() + o * stride + start, run, out.data() + o * run);
  return x.graph().record(OpKind::kSlice, std::move(out), {x},
                          [outer, stride, run, start](Graph<T>& g, std::uint32_t self) {
                            Tensor<T>* dx = g.input_grad(g.input(self, 0));
                            if (!dx) return;
                            const Tensor<T>& dy = g.output_grad(self);
                            for (std::size_t o = 0; o < outer; ++o) {
                              T* dst = dx->data() + o * stride + start;
                              kt<T>().add(dst, dy.data() + o * run, dst, run);
                            }
                          });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (shape_numel(shape) != x.value().size()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.graph().record(OpKind::kReshape, std::move(out), {x}, [](Graph<T>& g, std::uint32_t self) {
    if (Tensor<T>* dx = g.input_grad(g.input(self, 0))) accumulate(dx, g.output_grad(self).data());
  });
}

template <typename T>
Var<T> stack_columns(std::span<const Var<T>> columns) {
  if (columns.empty()) throw EmptyInputError("stack_columns: no columns");
  std::vector<Var<T>> as_matrices;
  as_matrices.reserve(columns.size());
  for (const Var<T>& c : columns) {
    require_rank(c, 1, "stack_columns");
    as_matrices.push_back(reshape(c, Shape{c.shape()[0], 1}));
  }
  return concat<T>(std::span<const Var<T>>(as_matrices), 1);
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels) {
  const Tensor<T>& z = logits.value();
  const std::size_t classes = z.rows();
  const std::size_t batch = z.rank() == 1 ? 1 : z.cols();
  if (z.rank() > 2) throw ShapeError("cross_entropy: logits must be rank 1 or 2");
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  if (!z.all_finite()) throw NumericError("cross_entropy: non-finite logits");
  std::vector<std::size_t> label_copy(labels.begin(), labels.end());
  // Column-wise softmax probabilities, kept for backward.
  Tensor<T> probs(z.shape());
  T total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (label_copy[b] >= classes) {
      throw LabelError("label " + std::to_string(label_copy[b]) + " outside [0," +
                       std::to_string(classes) + ")");
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, z[c * batch + b]);
    T denom = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[c * batch + b] = std::exp(z[c * batch + b] - mx);
      denom += probs[c * batch + b];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[c * batch + b] /= denom;
    total += mx + std::log(denom) - z[label_copy[b] * batch + b];
  }
  const T inv_batch = T(1) / static_cast<T>(batch);
  Tensor<T> out = Tensor<T>::scalar(total * inv_batch);
  return logits.graph().record(
      OpKind::kCrossEntropy, std::move(out), {logits},
      [probs = std::move(probs), label_copy, classes, batch, inv_batch](Graph<T>& g, std::uint32_t self) {
        Tensor<T>* dz = g.input_grad(g.input(self, 0));
        if (!dz) return;
        const T d = g.output_grad(self)[0] * inv_batch;
        for (std::size_t c = 0; c < classes; ++c) {
          for (std::size_t b = 0; b < batch; ++b) {
            const T target = label_copy[b] == c ? T(1) : T(0);
            (*dz)[c * batch + b] += d * (probs[c * batch + b] - target);
          }
        }
      });
}

template <typename T>
Var<T> batch_norm_train(Var<T> x, Var<T> gamma, Var<T> beta, T eps, Tensor<T>* batch_mean,
                        Tensor<T>* batch_var) {
  require_rank(x, 2, "batch_norm_train");
  const std::size_t d = x.shape()[0];
  const std::size_t n = x.shape()[1];
  if (n < 2) throw BatchTooSmallError("batch norm in train mode needs at least 2 samples, got " + std::to_string(n));
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) throw ShapeError("batch_norm_train: affine shape mismatch");
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  Tensor<T> xhat(xv.shape());
  Tensor<T> inv_std({d});
  Tensor<T> mean({d});
  Tensor<T> var({d});
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < d; ++i) {
    const T* row = xv.data() + i * n;
    const T mu = kt<T>().sum(row, n) / static_cast<T>(n);
    T acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += (row[j] - mu) * (row[j] - mu);
    const T sigma2 = acc / static_cast<T>(n);
    mean[i] = mu;
    var[i] = sigma2;
    inv_std[i] = T(1) / std::sqrt(sigma2 + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gv[i] * xhat[i * n + j] + bv[i];
    }
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  return x.graph().record(
      OpKind::kBatchNormTrain, std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), d, n](Graph<T>& g, std::uint32_t self) {
        const Tensor<T>& dy = g.output_grad(self);
        const Tensor<T>& gv = g.value(g.input(self, 1));
        Tensor<T>* dx = g.input_grad(g.input(self, 0));
        Tensor<T>* dgamma = g.input_grad(g.input(self, 1));
        Tensor<T>* dbeta = g.input_grad(g.input(self, 2));
        for (std::size_t i = 0; i < d; ++i) {
          const T* dyr = dy.data() + i * n;
          const T* xh = xhat.data() + i * n;
          const T sum_dy = kt<T>().sum(dyr, n);
          const T sum_dy_xhat = kt<T>().dot(dyr, xh, n);
          if (dgamma) (*dgamma)[i] += sum_dy_xhat;
          if (dbeta) (*dbeta)[i] += sum_dy;
          if (dx) {
            const T k = gv[i] * inv_std[i] / static_cast<T>(n);
            T* dxr = dx->data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
              dxr[j] += k * (static_cast<T>(n) * dyr[j] - sum_dy - xh[j] * sum_dy_xhat);
            }
          }
        }
      });
}

template <typename T>
Var<T> batch_norm_eval(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& mean,
                       const Tensor<T>& var, T eps) {
  require_rank(x, 2, "batch_norm_eval");
  const std::size_t d = x.shape()[0];
  const std::size_t n = x.shape()[1];
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d} || mean.shape() != Shape{d} ||
      var.shape() != Shape{d}) {
    throw ShapeError("batch_norm_eval: statistic shape mismatch");
  }
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  Tensor<T> inv_std({d});
  Tensor<T> xhat(xv.shape());
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < d; ++i) {
    inv_std[i] = T(1) / std::sqrt(var[i] + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mean[i]) * inv_std[i];
      out[i * n + j] = gv[i] * xhat[i * n + j] + bv[i];
    }
  }
  return x.graph().record(
      OpKind::kBatchNormEval, std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), d, n](Graph<T>& g, std::uint32_t self) {
        const Tensor<T>& dy = g.output_grad(self);
        const Tensor<T>& gv = g.value(g.input(self, 1));
        Tensor<T>* dx = g.input_grad(g.input(self, 0));
        Tensor<T>* dgamma = g.input_grad(g.input(self, 1));
        Tensor<T>* dbeta = g.input_grad(g.input(self, 2));
        for (std::size_t i = 0; i < d; ++i) {
          const T* dyr = dy.data() + i * n;
          if (dgamma) (*dgamma)[i] += kt<T>().dot(dyr, xhat.data() + i * n, n);
          if (dbeta) (*dbeta)[i] += kt<T>().sum(dyr, n);
          if (dx) kt<T>().axpy(gv[i] * inv_std[i], dyr, dx->data() + i * n, n);
        }
      });
}

template <typename T>
Var<T> gather_row(Var<T> table, std::size_t row) {
  require_rank(table, 2, "gather_row");
  const std::size_t rows = table.shape()[0];
  const std::size_t width = table.shape()[1];
  if (row >= rows) {
    throw VocabError("row " + std::to_string(row) + " outside table of " + std::to_string(rows) + " rows");
  }
  const Tensor<T>& tv = table.value();
  Tensor<T> out({width}, std::vector<T>(tv.data() + row * width, tv.data() + (row + 1) * width));
  return table.graph().record(OpKind::kGatherRow, std::move(out), {table},
                              [row, width](Graph<T>& g, std::uint32_t self) {
                                Tensor<T>* dt = g.input_grad(g.input(self, 0));
                                if (!dt) return;
                                T* dst = dt->data() + row * width;
                                kt<T>().add(dst, g.output_grad(self).data(), dst, width);
                              });
}

#define SINET_INSTANTIATE_OPS(T)                                                              \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                  \
  template Var<T> transpose<T>(Var<T>);                                                       \
  template Var<T> row_softmax<T>(Var<T>);                                                     \
  template Var<T> tanh<T>(Var<T>);                                                            \
  template Var<T> sigmoid<T>(Var<T>);                                                         \
  template Var<T> relu<T>(Var<T>);                                                            \
  template Var<T> add<T>(Var<T>, Var<T>);                                                     \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                     \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                     \
  template Var<T> scale<T>(Var<T>, T);                                                        \
  template Var<T> broadcast_add<T>(Var<T>, Var<T>);                                           \
  template Var<T> broadcast_mul<T>(Var<T>, Var<T>);                                           \
  template Var<T> reduce_mean_rows<T>(Var<T>);                                                \
  template Var<T> reduce_sum<T>(Var<T>);                                                      \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                            \
  template Var<T> slice<T>(Var<T>, std::size_t, std::size_t, std::size_t);                    \
  template Var<T> reshape<T>(Var<T>, Shape);                                                  \
  template Var<T> stack_columns<T>(std::span<const Var<T>>);                                  \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const std::size_t>);                     \
  template Var<T> batch_norm_train<T>(Var<T>, Var<T>, Var<T>, T, Tensor<T>*, Tensor<T>*);     \
  template Var<T> batch_norm_eval<T>(Var<T>, Var<T>, Var<T>, const Tensor<T>&, const Tensor<T>&, T); \
  template Var<T> gather_row<T>(Var<T>, std::size_t);

SINET_INSTANTIATE_OPS(float)
SINET_INSTANTIATE_OPS(double)

#undef SINET_INSTANTIATE_OPS

}  // namespace sinet
