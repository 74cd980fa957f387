#include "m2pt/autograd.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

namespace m2pt {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "×" : "") << shape[i];
  }
  os << ']';
  return os.str();
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Capacity: return "capacity error";
    case ErrorKind::Layout: return "layout error";
    case ErrorKind::Registry: return "registry error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Split: return "split error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Usage: return "usage error";
  }
  return "error";
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
MatMap<T> as_mat(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
ConstMatMap<T> as_mat(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_to_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += src[i];
  }
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(av.shape()) +
                         " and " + shape_to_string(bv.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(av.dim(0), bv.dim(1));
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto g = as_mat(std::as_const(t.grad(self)));
    if (t.requires_grad(a)) {
      as_mat(t.grad(a)).noalias() += g * as_mat(t.value(b)).transpose();
    }
    if (t.requires_grad(b)) {
      as_mat(t.grad(b)).noalias() += as_mat(t.value(a)).transpose() * g;
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  const Tensor<T>& bv = tape.value(bias);
  require_matrix(wv, "linear");
  if (xv.cols() != wv.dim(0) || bv.size() != wv.dim(1)) {
    throw DimensionError("linear: input " + shape_to_string(xv.shape()) + " incompatible with weight " +
                         shape_to_string(wv.shape()) + " and bias " + shape_to_string(bv.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(xv.rows(), wv.dim(1));
  auto om = as_mat(out);
  om.noalias() = as_mat(xv) * as_mat(wv);
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias_row(
      bv.data(), static_cast<Eigen::Index>(bv.size()));
  om.rowwise() += bias_row;
  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape<T>& t, Var self) {
    const auto g = as_mat(std::as_const(t.grad(self)));
    if (t.requires_grad(x)) {
      as_mat(t.grad(x)).noalias() += g * as_mat(t.value(weight)).transpose();
    }
    if (t.requires_grad(weight)) {
      as_mat(t.grad(weight)).noalias() += as_mat(t.value(x)).transpose() * g;
    }
    if (t.requires_grad(bias)) {
      Tensor<T>& gb = t.grad(bias);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb_row(gb.data(),
                                                            static_cast<Eigen::Index>(gb.size()));
      gb_row += g.colwise().sum();
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor<T> out = av;
  out.requires_grad = false;
  accumulate(out, bv);
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(a)) accumulate(t.grad(a), g);
    if (t.requires_grad(b)) accumulate(t.grad(b), g);
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      const Tensor<T>& bv2 = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      const Tensor<T>& av2 = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> out(tape.value(x).shape());
  const Tensor<T>& xv = tape.value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return tape.record(std::move(out), {x}, [x, factor](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T total{0};
  for (T v : xv.values()) total += v;
  return tape.record(Tensor<T>({1}, std::vector<T>{total}), {x}, [x](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Var gelu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  }
  return tape.record(std::move(out), {x}, [x, inv_sqrt2](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(x);
    Tensor<T>& gx = t.grad(x);
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T z = xv2[i];
      const T cdf = T(0.5) * (T(1) + std::erf(z * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * z * z);
      gx[i] += g[i] * (cdf + z * pdf);
    }
  });
}

namespace {

template <typename T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T m = x[0];
    for (std::size_t c = 1; c < cols; ++c) m = std::max(m, x[c]);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - m);
      total += y[c];
    }
    const T inv = T(1) / total;
    for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
  }
}

}  // namespace

template <typename T>
Var softmax(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.cols() == 0) {
    throw DimensionError("softmax: last axis must be nonempty, got " + shape_to_string(xv.shape()));
  }
  for (T v : xv.values()) {
    if (!std::isfinite(v)) {
      throw NumericError("softmax: non-finite input");
    }
  }
  Tensor<T> out(xv.shape());
  softmax_rows(xv.data(), out.data(), xv.rows(), xv.cols());
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    const std::size_t cols = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
}

template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gain, Var bias, T eps) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gain);
  const Tensor<T>& bv = tape.value(bias);
  const std::size_t d = xv.cols();
  if (d == 0 || gv.size() != d || bv.size() != d) {
    throw DimensionError("layer_norm: input " + shape_to_string(xv.shape()) + " with gain " +
                         shape_to_string(gv.shape()) + " and bias " + shape_to_string(bv.shape()));
  }
  const std::size_t rows = xv.rows();
  Tensor<T> out(xv.shape());
  auto normalized = std::make_shared<std::vector<T>>(xv.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T mean{0};
    for (std::size_t c = 0; c < d; ++c) mean += xr[c];
    mean /= T(d);
    T var{0};
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const T xhat = (xr[c] - mean) * inv;
      (*normalized)[r * d + c] = xhat;
      out[r * d + c] = xhat * gv[c] + bv[c];
    }
  }
  return tape.record(std::move(out), {x, gain, bias},
                     [x, gain, bias, normalized, rstd, d, rows](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& gv2 = t.value(gain);
    const std::vector<T>& xhat = *normalized;
    if (t.requires_grad(gain)) {
      Tensor<T>& gg = t.grad(gain);
      for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
    }
    if (t.requires_grad(bias)) {
      Tensor<T>& gb = t.grad(bias);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    }
    if (t.requires_grad(x)) {
      Tensor<T>& gx = t.grad(x);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_dxhat{0};
        T mean_dxhat_xhat{0};
        for (std::size_t c = 0; c < d; ++c) {
          const T dxhat = g[r * d + c] * gv2[c];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * xhat[r * d + c];
        }
        mean_dxhat /= T(d);
        mean_dxhat_xhat /= T(d);
        for (std::size_t c = 0; c < d; ++c) {
          const T dxhat = g[r * d + c] * gv2[c];
          gx[r * d + c] +=
              (*rstd)[r] * (dxhat - mean_dxhat - xhat[r * d + c] * mean_dxhat_xhat);
        }
      }
    }
  });
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> targets,
                  std::span<const std::uint8_t> mask) {
  const Tensor<T>& lv = tape.value(logits);
  const std::size_t rows = lv.rows();
  const std::size_t vocab = lv.cols();
  if (lv.rank() != 2 || targets.size() != rows || mask.size() != rows) {
    throw DimensionError("cross_entropy: logits " + shape_to_string(lv.shape()) + " with " +
                         std::to_string(targets.size()) + " targets and " +
                         std::to_string(mask.size()) + " mask entries");
  }
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    ++count;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) +
                           " outside vocabulary of " + std::to_string(vocab));
    }
  }
  if (count == 0) {
    throw EmptyLossError("cross_entropy: every position is masked out");
  }
  auto probs = std::make_shared<Tensor<T>>(lv.shape());
  softmax_rows(lv.data(), probs->data(), rows, vocab);
  T loss{0};
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const T* x = lv.data() + r * vocab;
    T m = x[0];
    for (std::size_t c = 1; c < vocab; ++c) m = std::max(m, x[c]);
    T total{0};
    for (std::size_t c = 0; c < vocab; ++c) total += std::exp(x[c] - m);
    loss += m + std::log(total) - x[targets[r]];
  }
  const T inv_count = T(1) / T(count);
  loss *= inv_count;
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return tape.record(Tensor<T>({1}, std::vector<T>{loss}), {logits},
                     [logits, probs, tgt = std::move(tgt), msk = std::move(msk), inv_count, vocab](
                         Tape<T>& t, Var self) {
    const T g = t.grad(self)[0] * inv_count;
    Tensor<T>& gl = t.grad(logits);
    for (std::size_t r = 0; r < msk.size(); ++r) {
      if (!msk[r]) continue;
      for (std::size_t c = 0; c < vocab; ++c) gl[r * vocab + c] += g * (*probs)[r * vocab + c];
      gl[r * vocab + static_cast<std::size_t>(tgt[r])] -= g;
    }
  });
}

template <typename T>
Var concat_rows(Tape<T>& tape, std::span<const Var> parts) {
  if (parts.empty()) {
    throw DimensionError("concat_rows: no inputs");
  }
  const std::size_t cols = tape.value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    const Tensor<T>& v = tape.value(p);
    if (v.cols() != cols) {
      throw DimensionError("concat_rows: width mismatch " + shape_to_string(tape.value(parts[0]).shape()) +
                           " vs " + shape_to_string(v.shape()));
    }
    rows += v.rows();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor<T>& v = tape.value(p);
    std::copy(v.data(), v.data() + v.size(), out.data() + offset * cols);
    offsets.push_back(offset);
    offset += v.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape.record(std::move(out), std::span<const Var>(ps),
                     [ps, offsets, cols](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!t.requires_grad(ps[i])) continue;
      Tensor<T>& gp = t.grad(ps[i]);
      const T* src = g.data() + offsets[i] * cols;
      for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += src[j];
    }
  });
}

template <typename T>
Var slice_rows(Tape<T>& tape, Var x, std::size_t begin, std::size_t end) {
  const Tensor<T>& xv = tape.value(x);
  if (begin > end || end > xv.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_to_string(xv.shape()));
  }
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(end - begin, cols);
  std::copy(xv.data() + begin * cols, xv.data() + end * cols, out.data());
  return tape.record(std::move(out), {x}, [x, begin, cols](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    T* dst = t.grad(x).data() + begin * cols;
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
  });
}

template <typename T>
Var embedding(Tape<T>& tape, Var table, std::span<const int> ids) {
  const Tensor<T>& tv = tape.value(table);
  require_matrix(tv, "embedding");
  const std::size_t d = tv.dim(1);
  Tensor<T> out = Tensor<T>::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.dim(0)) {
      throw DimensionError("embedding: token " + std::to_string(ids[i]) + " outside table " +
                           shape_to_string(tv.shape()));
    }
    const T* src = tv.data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(src, src + d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return tape.record(std::move(out), {table}, [table, idv = std::move(idv), d](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gt = t.grad(table);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      T* dst = gt.data() + static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += g[i * d + c];
    }
  });
}

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t num_heads, bool causal,
              AttentionCapture<T>* capture) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  const Tensor<T>& vv = tape.value(v);
  require_same_shape(qv, kv, "attention");
  require_same_shape(qv, vv, "attention");
  const std::size_t n = qv.rows();
  const std::size_t d = qv.cols();
  if (num_heads == 0 || d % num_heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(num_heads) + " heads");
  }
  const std::size_t dh = d / num_heads;
  const T scale_factor = T(1) / std::sqrt(T(dh));
  const auto rows = static_cast<Eigen::Index>(n);
  const auto head_cols = static_cast<Eigen::Index>(dh);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));

  Tensor<T> out = Tensor<T>::matrix(n, d);
  auto probs = std::make_shared<std::vector<RowMat<T>>>(num_heads);
  if (capture != nullptr && capture->enabled) {
    capture->mean_probs = Tensor<T>::matrix(n, n);
  }
  for (std::size_t h = 0; h < num_heads; ++h) {
    ConstStridedMap<T> qh(qv.data() + h * dh, rows, head_cols, stride);
    ConstStridedMap<T> kh(kv.data() + h * dh, rows, head_cols, stride);
    ConstStridedMap<T> vh(vv.data() + h * dh, rows, head_cols, stride);
    RowMat<T>& p = (*probs)[h];
    p.noalias() = (qh * kh.transpose()) * scale_factor;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::Index visible = causal ? i + 1 : rows;
      T m = p(i, 0);
      for (Eigen::Index j = 1; j < visible; ++j) m = std::max(m, p(i, j));
      T total{0};
      for (Eigen::Index j = 0; j < visible; ++j) {
        p(i, j) = std::exp(p(i, j) - m);
        total += p(i, j);
      }
      const T inv = T(1) / total;
      for (Eigen::Index j = 0; j < visible; ++j) p(i, j) *= inv;
      for (Eigen::Index j = visible; j < rows; ++j) p(i, j) = T{0};
    }
    StridedMap<T> oh(out.data() + h * dh, rows, head_cols, stride);
    oh.noalias() = p * vh;
    if (capture != nullptr && capture->enabled) {
      as_mat(capture->mean_probs) += p / T(num_heads);
    }
  }
  if (!tape.requires_grad(q) && !tape.requires_grad(k) && !tape.requires_grad(v)) {
    probs.reset();
  }
  return tape.record(std::move(out), {q, k, v},
                     [q, k, v, probs, num_heads, dh, d, rows, head_cols, scale_factor](Tape<T>& t,
                                                                                      Var self) {
    const Eigen::OuterStride<> st(static_cast<Eigen::Index>(d));
    const Tensor<T>& g = t.grad(self);
    const bool need_q = t.requires_grad(q);
    const bool need_k = t.requires_grad(k);
    const bool need_v = t.requires_grad(v);
    RowMat<T> dp;
    for (std::size_t h = 0; h < num_heads; ++h) {
      const RowMat<T>& p = (*probs)[h];
      ConstStridedMap<T> gh(g.data() + h * dh, rows, head_cols, st);
      if (need_v) {
        StridedMap<T> gv(t.grad(v).data() + h * dh, rows, head_cols, st);
        gv.noalias() += p.transpose() * gh;
      }
      if (!need_q && !need_k) continue;
      ConstStridedMap<T> vh(t.value(v).data() + h * dh, rows, head_cols, st);
      dp.noalias() = gh * vh.transpose();
      // softmax backward, row by row; masked entries have p = 0 and vanish
      for (Eigen::Index i = 0; i < rows; ++i) {
        const T dot = p.row(i).dot(dp.row(i));
        dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
      }
      dp *= scale_factor;
      if (need_q) {
        ConstStridedMap<T> kh(t.value(k).data() + h * dh, rows, head_cols, st);
        StridedMap<T> gq(t.grad(q).data() + h * dh, rows, head_cols, st);
        gq.noalias() += dp * kh;
      }
      if (need_k) {
        ConstStridedMap<T> qh(t.value(q).data() + h * dh, rows, head_cols, st);
        StridedMap<T> gk(t.grad(k).data() + h * dh, rows, head_cols, st);
        gk.noalias() += dp.transpose() * qh;
      }
    }
  });
}

#define M2PT_INSTANTIATE_OPS(T)                                                              \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                           \
  template Var add<T>(Tape<T>&, Var, Var);                                                   \
  template Var mul<T>(Tape<T>&, Var, Var);                                                   \
  template Var scale<T>(Tape<T>&, Var, T);                                                   \
  template Var sum<T>(Tape<T>&, Var);                                                        \
  template Var gelu<T>(Tape<T>&, Var);                                                       \
  template Var softmax<T>(Tape<T>&, Var);                                                    \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                    \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const int>,                         \
                                std::span<const std::uint8_t>);                              \
  template Var concat_rows<T>(Tape<T>&, std::span<const Var>);                               \
  template Var slice_rows<T>(Tape<T>&, Var, std::size_t, std::size_t);                       \
  template Var embedding<T>(Tape<T>&, Var, std::span<const int>);                            \
  template Var attention<T>(Tape<T>&, Var, Var, Var, std::size_t, bool, AttentionCapture<T>*);

M2PT_INSTANTIATE_OPS(float)
M2PT_INSTANTIATE_OPS(double)

}  // namespace m2pt
