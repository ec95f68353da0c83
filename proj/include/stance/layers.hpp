#pragma once

// Forward/backward kernels for the handful of layers the stance model uses.
// Each backward accumulates (+=) into Parameter::grad and returns the
// gradient with respect to the layer input.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stance/tensor.hpp"

namespace stance {

// ---------------------------------------------------------------- dense

// y = xW + b for x [batch, in], W [in, out], b [out].
inline Tensor dense_forward(const Tensor& x, const Parameter& w,
                            const Parameter& b) {
  if (x.rank() != 2 || w.value.rank() != 2 || b.value.rank() != 1 ||
      x.dim(1) != w.value.dim(0) || w.value.dim(1) != b.value.dim(0)) {
    throw std::invalid_argument("dense: shape mismatch x" +
                                shape_string(x.shape) + " W" +
                                shape_string(w.value.shape) + " b" +
                                shape_string(b.value.shape));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.value.dim(1);
  Tensor y({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    double* yr = &y.data[r * out];
    std::copy(b.value.data.begin(), b.value.data.end(), yr);
    const double* xr = &x.data[r * in];
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;  // BOW inputs are mostly zero
      const double* wr = &w.value.data[i * out];
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

inline Tensor dense_backward(const Tensor& x, Parameter& w, Parameter& b,
                             const Tensor& dy) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.value.dim(1);
  if (dy.rank() != 2 || dy.dim(0) != batch || dy.dim(1) != out) {
    throw std::invalid_argument("dense: upstream gradient shape mismatch");
  }
  Tensor dx({batch, in});
  for (std::size_t r = 0; r < batch; ++r) {
    const double* dyr = &dy.data[r * out];
    const double* xr = &x.data[r * in];
    double* dxr = &dx.data[r * in];
    for (std::size_t o = 0; o < out; ++o) b.grad.data[o] += dyr[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = &w.value.data[i * out];
      double* gr = &w.grad.data[i * out];
      double acc = 0.0;
      const double xv = xr[i];
      if (xv != 0.0) {
        for (std::size_t o = 0; o < out; ++o) {
          acc += dyr[o] * wr[o];
          gr[o] += xv * dyr[o];
        }
      } else {
        for (std::size_t o = 0; o < out; ++o) acc += dyr[o] * wr[o];
      }
      dxr[i] = acc;
    }
  }
  return dx;
}

// ---------------------------------------------------------------- relu

inline Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

// Gradient passes where x > 0; zero at x == 0.
inline Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (x.shape != dy.shape) {
    throw std::invalid_argument("relu: upstream gradient shape mismatch");
  }
  Tensor dx(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------- embedding

inline Tensor embed_forward(std::span<const int> ids, const Parameter& table) {
  const std::size_t vocab = table.value.dim(0), dim = table.value.dim(1);
  Tensor out({ids.size(), dim});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("embedding id " + std::to_string(id) +
                              " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(&table.value.data[static_cast<std::size_t>(id) * dim], dim,
                &out.data[t * dim]);
  }
  return out;
}

// Scatter-add of dy rows into the table gradient.
inline void embed_backward(std::span<const int> ids, Parameter& table,
                           const Tensor& dy) {
  const std::size_t dim = table.value.dim(1);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    double* g = &table.grad.data[static_cast<std::size_t>(ids[t]) * dim];
    const double* d = &dy.data[t * dim];
    for (std::size_t k = 0; k < dim; ++k) g[k] += d[k];
  }
}

// ---------------------------------------------------------------- conv

// Per-map argmax position and pre-activation at that position.
struct ConvPoolTrace {
  std::vector<std::size_t> argmax;
  std::vector<double> preact;
};

// Valid 1-d convolution over time with filters F [width, dim, maps], ReLU,
// then max over time. x must have at least `width` rows.
inline Tensor conv1d_maxpool_forward(const Tensor& x, const Parameter& filter,
                                     const Parameter& bias,
                                     ConvPoolTrace* trace = nullptr) {
  if (filter.value.rank() != 3 || bias.value.rank() != 1) {
    throw std::invalid_argument("conv1d: filter must be [width, dim, maps]");
  }
  const std::size_t width = filter.value.dim(0), dim = filter.value.dim(1),
                    maps = filter.value.dim(2);
  if (width == 0 || maps == 0) {
    throw std::invalid_argument("conv1d: width and maps must be positive");
  }
  if (x.rank() != 2 || x.dim(1) != dim || bias.value.dim(0) != maps) {
    throw std::invalid_argument("conv1d: shape mismatch x" +
                                shape_string(x.shape) + " F" +
                                shape_string(filter.value.shape));
  }
  if (x.dim(0) < width) {
    throw std::invalid_argument("conv1d: input shorter than filter width");
  }
  const std::size_t positions = x.dim(0) - width + 1;
  std::vector<double> best(maps, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> where(maps, 0);
  std::vector<double> z(maps);
  for (std::size_t t = 0; t < positions; ++t) {
    std::copy(bias.value.data.begin(), bias.value.data.end(), z.begin());
    for (std::size_t k = 0; k < width; ++k) {
      const double* xr = &x.data[(t + k) * dim];
      const double* fk = &filter.value.data[k * dim * maps];
      for (std::size_t d = 0; d < dim; ++d) {
        const double xv = xr[d];
        if (xv == 0.0) continue;
        const double* f = fk + d * maps;
        for (std::size_t m = 0; m < maps; ++m) z[m] += xv * f[m];
      }
    }
    // ReLU is monotone, so the first maximum of z is also the first maximum
    // of relu(z) unless every position is clipped to zero (then t = 0).
    for (std::size_t m = 0; m < maps; ++m) {
      if (z[m] > best[m]) {
        best[m] = z[m];
        where[m] = t;
      }
    }
  }
  Tensor out({maps});
  for (std::size_t m = 0; m < maps; ++m) {
    if (best[m] <= 0.0) where[m] = 0;
    out.data[m] = best[m] > 0.0 ? best[m] : 0.0;
  }
  if (trace) {
    trace->argmax = std::move(where);
    trace->preact = std::move(best);
  }
  return out;
}

// Routes dy[m] through the argmax position of map m only.
inline Tensor conv1d_maxpool_backward(const Tensor& x, Parameter& filter,
                                      Parameter& bias,
                                      const ConvPoolTrace& trace,
                                      std::span<const double> dy) {
  const std::size_t dim = filter.value.dim(1), width = filter.value.dim(0),
                    maps = filter.value.dim(2);
  Tensor dx(x.shape);
  for (std::size_t m = 0; m < maps; ++m) {
    if (trace.preact[m] <= 0.0 || dy[m] == 0.0) continue;
    const double g = dy[m];
    const std::size_t t = trace.argmax[m];
    bias.grad.data[m] += g;
    for (std::size_t k = 0; k < width; ++k) {
      const double* xr = &x.data[(t + k) * dim];
      double* dxr = &dx.data[(t + k) * dim];
      const std::size_t base = k * dim * maps + m;
      for (std::size_t d = 0; d < dim; ++d) {
        filter.grad.data[base + d * maps] += xr[d] * g;
        dxr[d] += filter.value.data[base + d * maps] * g;
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- softmax

struct SoftmaxLoss {
  double loss = 0.0;  // mean over counted rows
  Tensor probs;
  std::size_t counted = 0;
};

// Rows whose label is negative are excluded from the loss and gradient.
inline SoftmaxLoss softmax_cross_entropy(const Tensor& logits,
                                         std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw std::invalid_argument("softmax_cross_entropy: batch mismatch");
  }
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  SoftmaxLoss result;
  result.probs = Tensor(logits.shape);
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* row = &logits.data[r * k];
    double* p = &result.probs.data[r * k];
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(row[c] - mx);
    const double log_sum = std::log(sum);
    for (std::size_t c = 0; c < k; ++c) p[c] = std::exp(row[c] - mx - log_sum);
    const int y = labels[r];
    if (y < 0) continue;
    if (static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(y) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    total -= row[y] - mx - log_sum;
    ++result.counted;
  }
  result.loss = result.counted ? total / static_cast<double>(result.counted)
                               : 0.0;
  return result;
}

// d(mean loss)/d(logits) = (p - onehot) / counted.
inline Tensor softmax_cross_entropy_backward(const SoftmaxLoss& fwd,
                                             std::span<const int> labels,
                                             double weight = 1.0) {
  Tensor d(fwd.probs.shape);
  if (fwd.counted == 0) return d;
  const std::size_t k = fwd.probs.dim(1);
  const double scale = weight / static_cast<double>(fwd.counted);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0) continue;
    for (std::size_t c = 0; c < k; ++c) {
      d.data[r * k + c] = fwd.probs.data[r * k + c] * scale;
    }
    d.data[r * k + static_cast<std::size_t>(labels[r])] -= scale;
  }
  return d;
}

// ---------------------------------------------------------------- reversal

inline void check_reversal_lambda(double lambda) {
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("grad_reverse: lambda must be non-negative");
  }
}

// Identity in the forward direction.
inline Tensor grad_reverse_forward(const Tensor& x, double lambda) {
  check_reversal_lambda(lambda);
  return x;
}

// Emits -lambda * dy.
inline Tensor grad_reverse_backward(const Tensor& dy, double lambda) {
  check_reversal_lambda(lambda);
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = -lambda * dy.data[i];
  return dx;
}

}  // namespace stance
