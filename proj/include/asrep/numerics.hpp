#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "asrep/rng.hpp"

namespace asrep {

// Dense row-major matrix over a contiguous buffer. Deliberately minimal: the
// model code below addresses rows directly and writes its own loops.
template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {}

  void resize(int r, int c) {
    rows = r;
    cols = c;
    data.assign(static_cast<size_t>(r) * c, T(0));
  }

  T* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const T* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }
};

// Numerically stable softmax: the max is subtracted before exponentiation, so
// any finite input produces a proper distribution.
template <typename T>
void softmax_inplace(std::span<T> v) {
  if (v.empty()) return;
  T mx = v[0];
  for (T x : v) mx = std::max(mx, x);
  T sum = T(0);
  for (T& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (T& x : v) x /= sum;
}

template <typename T>
std::vector<T> softmax(std::span<const T> v) {
  std::vector<T> out(v.begin(), v.end());
  softmax_inplace(std::span<T>(out));
  return out;
}

inline constexpr double kLayerNormEps = 1e-8;

// Layer norm over one row: y = (x - mean) / sqrt(var + eps) * gain + bias.
// mean and 1/sqrt(var + eps) are saved for the backward pass.
template <typename T>
void layer_norm_row(const T* x, int d, const T* gain, const T* bias, T* out, T* mean_out,
                    T* rstd_out) {
  T mean = T(0);
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<T>(d);
  T var = T(0);
  for (int i = 0; i < d; ++i) {
    const T c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<T>(d);
  const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
  for (int i = 0; i < d; ++i) {
    out[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
  }
  *mean_out = mean;
  *rstd_out = rstd;
}

// Backward for one layer-normed row. dx is accumulated (+=) so the caller can
// fold the residual branch into the same buffer; dgain/dbias accumulate too.
template <typename T>
void layer_norm_row_backward(const T* dy, const T* x, T mean, T rstd, const T* gain, int d,
                             T* dx_accum, T* dgain_accum, T* dbias_accum) {
  // norm_i = (x_i - mean) * rstd; y_i = norm_i * gain_i + bias_i
  T mean_dn = T(0);
  T mean_dn_norm = T(0);
  for (int i = 0; i < d; ++i) {
    const T norm = (x[i] - mean) * rstd;
    const T dn = dy[i] * gain[i];
    mean_dn += dn;
    mean_dn_norm += dn * norm;
    dgain_accum[i] += dy[i] * norm;
    dbias_accum[i] += dy[i];
  }
  mean_dn /= static_cast<T>(d);
  mean_dn_norm /= static_cast<T>(d);
  for (int i = 0; i < d; ++i) {
    const T norm = (x[i] - mean) * rstd;
    const T dn = dy[i] * gain[i];
    dx_accum[i] += rstd * (dn - mean_dn - norm * mean_dn_norm);
  }
}

// Inverted dropout. mask[i] is 0 or 1/(1 - rate), x is scaled in place, and
// expectation is preserved; rate 0 never touches the RNG and leaves x intact.
template <typename T>
void dropout_inplace(T* x, int count, T rate, Rng& rng, T* mask) {
  if (rate <= T(0)) {
    for (int i = 0; i < count; ++i) mask[i] = T(1);
    return;
  }
  if (rate >= T(1)) throw std::invalid_argument("dropout rate must be < 1");
  const T keep_scale = T(1) / (T(1) - rate);
  for (int i = 0; i < count; ++i) {
    const bool keep = rng.uniform() >= static_cast<double>(rate);
    mask[i] = keep ? keep_scale : T(0);
    x[i] *= mask[i];
  }
}

// Adam with bias correction. beta powers are carried as running products.
template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;

  AdamState() = default;
  explicit AdamState(size_t count, double lr_ = 1e-3)
      : m(count, T(0)), v(count, T(0)), lr(lr_) {}
};

template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& st) {
  if (params.size() != grads.size() || params.size() != st.m.size() ||
      params.size() != st.v.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state size mismatch");
  }
  st.step += 1;
  st.beta1_pow *= st.beta1;
  st.beta2_pow *= st.beta2;
  const T b1 = static_cast<T>(st.beta1);
  const T b2 = static_cast<T>(st.beta2);
  const T corr1 = static_cast<T>(1.0 / (1.0 - st.beta1_pow));
  const T corr2 = static_cast<T>(1.0 / (1.0 - st.beta2_pow));
  const T lr = static_cast<T>(st.lr);
  const T eps = static_cast<T>(st.eps);
  for (size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    st.m[i] = b1 * st.m[i] + (T(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (T(1) - b2) * g * g;
    const T mhat = st.m[i] * corr1;
    const T vhat = st.v[i] * corr2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central-difference check of analytic gradients at the probed coordinates.
// loss_fn must be deterministic in params. Relative error per coordinate is
// |a - n| / max(1e-8, |a| + |n|).
inline GradCheckResult gradient_check(
    const std::function<double(const std::vector<double>&)>& loss_fn,
    std::vector<double> params, const std::vector<double>& analytic,
    std::span<const size_t> coords, double h = 1e-5) {
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("gradient_check: params/analytic size mismatch");
  }
  GradCheckResult res;
  for (size_t c : coords) {
    if (c >= params.size()) throw std::out_of_range("gradient_check: coordinate out of range");
    const double saved = params[c];
    params[c] = saved + h;
    const double lp = loss_fn(params);
    params[c] = saved - h;
    const double lm = loss_fn(params);
    params[c] = saved;
    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      throw std::runtime_error("gradient_check: non-finite loss during probing");
    }
    const double numeric = (lp - lm) / (2.0 * h);
    const double a = analytic[c];
    const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (rel >= res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_coord = c;
      res.analytic_at_worst = a;
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

// -log(sigmoid(x)) without overflow for large |x|.
template <typename T>
T neg_log_sigmoid(T x) {
  return std::max(-x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace asrep
