#pragma once

// Dense affine kernels used by the network layers. Every kernel has a serial
// reference path and an OpenMP path; both compute each output element with the
// same serial inner reduction, so results are bit-identical regardless of
// execution policy or thread count.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace equipow::kernels {

enum class Exec { Serial, Parallel };

// Process-wide default policy. Parallel only kicks in above a work threshold
// so tiny problems do not pay the fork/join cost.
Exec default_exec();
void set_default_exec(Exec e);
bool parallel_enabled(Exec e, std::size_t work);

template <typename S>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<S> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, S(0)) {}

  S* operator[](std::size_t r) { return data.data() + r * cols; }
  const S* operator[](std::size_t r) const { return data.data() + r * cols; }
  S& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  S at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
  void fill(S v) { data.assign(data.size(), v); }
};

enum class Act : std::uint8_t { Relu = 0, ScaledTanh = 1, Identity = 2 };

// Reductions accumulate in double regardless of the storage scalar, so
// 32-bit results are insensitive to summation order (permuting a shared
// layer's blocks reorders the terms) up to one final rounding.

// Y[b,r] = bias(r) + sum_c X[b,c] * w(r,c), c ascending.
template <typename S, typename WAcc, typename BAcc>
void affine_forward(Mat<S>& Y, const Mat<S>& X, std::size_t out_dim,
                    WAcc&& w, BAcc&& bias, Exec exec) {
  const std::size_t B = X.rows, in = X.cols;
  Y.rows = B;
  Y.cols = out_dim;
  Y.data.resize(B * out_dim);
  const bool par = parallel_enabled(exec, B * out_dim * in);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(B); ++b) {
    const S* x = X[b];
    S* y = Y[static_cast<std::size_t>(b)];
    for (std::size_t r = 0; r < out_dim; ++r) {
      double acc = bias(r);
      for (std::size_t c = 0; c < in; ++c)
        acc += static_cast<double>(x[c]) * w(r, c);
      y[r] = static_cast<S>(acc);
    }
  }
}

// Block-shared forward, same arithmetic order as the flat c-ascending loop
// (blocks are contiguous), with the U/V row pointers hoisted out of the
// inner loop.
template <typename S>
void pe_affine_forward(Mat<S>& Y, const Mat<S>& X, const Mat<S>& U,
                       const Mat<S>& V, const std::vector<S>& P, std::size_t n,
                       Exec exec) {
  const std::size_t B = X.rows, ib = U.cols, ob = U.rows;
  Y.rows = B;
  Y.cols = n * ob;
  Y.data.resize(B * n * ob);
  const bool par = parallel_enabled(exec, B * n * ob * n * ib);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(B); ++b) {
    const S* x = X[b];
    S* y = Y[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < ob; ++p) {
        double acc = P[p];
        for (std::size_t j = 0; j < n; ++j) {
          const S* w = (i == j ? U : V)[p];
          const S* xj = x + j * ib;
          for (std::size_t q = 0; q < ib; ++q)
            acc += static_cast<double>(xj[q]) * w[q];
        }
        y[i * ob + p] = static_cast<S>(acc);
      }
  }
}

// [A A ... A] output map.
template <typename S>
void pi_affine_forward(Mat<S>& Y, const Mat<S>& X, const Mat<S>& A,
                       const std::vector<S>& bias, std::size_t n, Exec exec) {
  const std::size_t B = X.rows, ib = A.cols, out = A.rows;
  Y.rows = B;
  Y.cols = out;
  Y.data.resize(B * out);
  const bool par = parallel_enabled(exec, B * out * n * ib);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(B); ++b) {
    const S* x = X[b];
    S* y = Y[static_cast<std::size_t>(b)];
    for (std::size_t r = 0; r < out; ++r) {
      double acc = bias[r];
      const S* w = A[r];
      for (std::size_t j = 0; j < n; ++j) {
        const S* xj = x + j * ib;
        for (std::size_t q = 0; q < ib; ++q)
          acc += static_cast<double>(xj[q]) * w[q];
      }
      y[r] = static_cast<S>(acc);
    }
  }
}

// dX[b,c] = sum_r G[b,r] * w(r,c), r ascending.
template <typename S, typename WAcc>
void affine_backward_input(Mat<S>& dX, const Mat<S>& G, std::size_t in_dim,
                           WAcc&& w, Exec exec) {
  const std::size_t B = G.rows, out = G.cols;
  dX.rows = B;
  dX.cols = in_dim;
  dX.data.resize(B * in_dim);
  const bool par = parallel_enabled(exec, B * out * in_dim);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(B); ++b) {
    const S* g = G[b];
    S* dx = dX[static_cast<std::size_t>(b)];
    for (std::size_t c = 0; c < in_dim; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < out; ++r)
        acc += static_cast<double>(g[r]) * w(r, c);
      dx[c] = static_cast<S>(acc);
    }
  }
}

// Shared-layer input gradient, r ascending == (block i, sub-row p) ascending.
template <typename S>
void pe_affine_backward_input(Mat<S>& dX, const Mat<S>& G, const Mat<S>& U,
                              const Mat<S>& V, std::size_t n, Exec exec) {
  const std::size_t B = G.rows, ib = U.cols, ob = U.rows;
  dX.rows = B;
  dX.cols = n * ib;
  dX.data.resize(B * n * ib);
  const bool par = parallel_enabled(exec, B * n * ib * n * ob);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(B); ++b) {
    const S* g = G[b];
    S* dx = dX[static_cast<std::size_t>(b)];
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t q = 0; q < ib; ++q) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const Mat<S>& w = (i == j ? U : V);
          const S* gi = g + i * ob;
          for (std::size_t p = 0; p < ob; ++p)
            acc += static_cast<double>(gi[p]) * w[p][q];
        }
        dx[j * ib + q] = static_cast<S>(acc);
      }
  }
}

template <typename S>
void pi_affine_backward_input(Mat<S>& dX, const Mat<S>& G, const Mat<S>& A,
                              std::size_t n, Exec exec) {
  const std::size_t B = G.rows, ib = A.cols, out = A.rows;
  dX.rows = B;
  dX.cols = n * ib;
  dX.data.resize(B * n * ib);
  const bool par = parallel_enabled(exec, B * n * ib * out);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(B); ++b) {
    const S* g = G[b];
    S* dx = dX[static_cast<std::size_t>(b)];
    for (std::size_t q = 0; q < ib; ++q) {
      double acc = 0.0;
      for (std::size_t r = 0; r < out; ++r)
        acc += static_cast<double>(g[r]) * A[r][q];
      for (std::size_t j = 0; j < n; ++j) dx[j * ib + q] = static_cast<S>(acc);
    }
  }
}

// Per-position gradient sum_b G[b,r] * X[b,c].
template <typename S>
inline double position_grad(const Mat<S>& G, const Mat<S>& X, std::size_t r,
                            std::size_t c) {
  double acc = 0.0;
  for (std::size_t b = 0; b < G.rows; ++b)
    acc += static_cast<double>(G[b][r]) * X[b][c];
  return acc;
}

// dW[r,c] = sum_b G[b,r] X[b,c]
template <typename S>
void grad_weights_dense(Mat<S>& dW, const Mat<S>& G, const Mat<S>& X,
                        Exec exec) {
  const std::size_t out = G.cols, in = X.cols;
  dW.rows = out;
  dW.cols = in;
  dW.data.resize(out * in);
  const bool par = parallel_enabled(exec, out * in * G.rows);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(out); ++r)
    for (std::size_t c = 0; c < in; ++c)
      dW[static_cast<std::size_t>(r)][c] = static_cast<S>(
          position_grad(G, X, static_cast<std::size_t>(r), c));
}

// Tied gradients of the block-shared layer: the free block gradient is the
// sum of the dense position gradients over every position tied to it, block
// index ascending.
// dU[p,q] = sum_i   pos(i*ob+p, i*ib+q)
// dV[p,q] = sum_i sum_{j!=i} pos(i*ob+p, j*ib+q)   (i outer, j inner, asc)
template <typename S>
void grad_weights_pe(Mat<S>& dU, Mat<S>& dV, const Mat<S>& G, const Mat<S>& X,
                     std::size_t n, std::size_t ob, std::size_t ib, Exec exec) {
  dU.rows = ob; dU.cols = ib; dU.data.resize(ob * ib);
  dV.rows = ob; dV.cols = ib; dV.data.resize(ob * ib);
  const bool par = parallel_enabled(exec, ob * ib * n * n * G.rows);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(ob); ++p) {
    for (std::size_t q = 0; q < ib; ++q) {
      double u = 0.0, v = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double s = position_grad(
              G, X, i * ob + static_cast<std::size_t>(p), j * ib + q);
          if (i == j) u += s; else v += s;
        }
      }
      dU[static_cast<std::size_t>(p)][q] = static_cast<S>(u);
      dV[static_cast<std::size_t>(p)][q] = static_cast<S>(v);
    }
  }
}

// dA[p,q] = sum_i pos(p, i*ib+q)
template <typename S>
void grad_weights_pi(Mat<S>& dA, const Mat<S>& G, const Mat<S>& X,
                     std::size_t n, std::size_t ib, Exec exec) {
  const std::size_t out = G.cols;
  dA.rows = out; dA.cols = ib; dA.data.resize(out * ib);
  const bool par = parallel_enabled(exec, out * ib * n * G.rows);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(out); ++p)
    for (std::size_t q = 0; q < ib; ++q) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += position_grad(G, X, static_cast<std::size_t>(p), i * ib + q);
      dA[static_cast<std::size_t>(p)][q] = static_cast<S>(acc);
    }
}

// db[r] = sum_b G[b,r]; tied variant sums the block positions ascending.
template <typename S>
void grad_bias_dense(std::vector<S>& db, const Mat<S>& G) {
  db.assign(G.cols, S(0));
  for (std::size_t r = 0; r < G.cols; ++r) {
    double acc = 0.0;
    for (std::size_t b = 0; b < G.rows; ++b) acc += G[b][r];
    db[r] = static_cast<S>(acc);
  }
}

template <typename S>
void grad_bias_tied(std::vector<S>& dP, const Mat<S>& G, std::size_t n,
                    std::size_t ob) {
  dP.assign(ob, S(0));
  for (std::size_t p = 0; p < ob; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t b = 0; b < G.rows; ++b) acc += G[b][i * ob + p];
    dP[p] = static_cast<S>(acc);
  }
}

template <typename S>
void act_forward(Mat<S>& Y, const Mat<S>& Z, Act a, Exec exec) {
  Y.rows = Z.rows;
  Y.cols = Z.cols;
  Y.data.resize(Z.size());
  if (a == Act::Identity) {
    Y.data = Z.data;
    return;
  }
  const bool par = parallel_enabled(exec, Z.size() * 8);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(Z.size()); ++i) {
    const S z = Z.data[static_cast<std::size_t>(i)];
    Y.data[static_cast<std::size_t>(i)] =
        (a == Act::Relu) ? (z > S(0) ? z : S(0))
                         : S(0.5) * (std::tanh(z) + S(1));
  }
}

// dZ = G * act'(Z); ScaledTanh derivative from the cached output: 2 y (1-y).
template <typename S>
void act_backward(Mat<S>& dZ, const Mat<S>& G, const Mat<S>& Z, const Mat<S>& Y,
                  Act a, Exec exec) {
  dZ.rows = G.rows;
  dZ.cols = G.cols;
  dZ.data.resize(G.size());
  if (a == Act::Identity) {
    dZ.data = G.data;
    return;
  }
  const bool par = parallel_enabled(exec, G.size() * 4);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(G.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (a == Act::Relu) {
      dZ.data[k] = Z.data[k] > S(0) ? G.data[k] : S(0);
    } else {
      const S y = Y.data[k];
      dZ.data[k] = G.data[k] * S(2) * y * (S(1) - y);
    }
  }
}

}  // namespace equipow::kernels
