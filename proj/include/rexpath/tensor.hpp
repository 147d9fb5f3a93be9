#pragma once

// Dense building blocks shared by the encoder and its tests. Every function
// is a plain composition of Eigen expressions so a reference model built
// from the same pieces reproduces the encoder's arithmetic exactly.

#include <cmath>
#include <Eigen/Dense>

namespace rexpath {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// X W + b, with b stored as a 1 x out matrix.
template <typename S>
Mat<S> linear(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
  Mat<S> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <typename S>
void softmax_rows_in_place(Mat<S>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const S m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

template <typename S>
struct LayerNormCache {
  Mat<S> xhat;
  Vec<S> rstd;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, LayerNormCache<S>* cache) {
  const Eigen::Index d = x.cols();
  Vec<S> mean = x.rowwise().mean();
  Mat<S> centered = x.colwise() - mean;
  Vec<S> var = centered.array().square().rowwise().sum() / static_cast<S>(d);
  Vec<S> rstd = (var.array() + static_cast<S>(kLayerNormEps)).rsqrt();
  Mat<S> xhat = centered.array().colwise() * rstd.array();
  Mat<S> y = xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

// Returns dx; accumulates dgamma, dbeta.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& gamma, const LayerNormCache<S>& cache,
                           Mat<S>& dgamma, Mat<S>& dbeta) {
  const Eigen::Index d = dy.cols();
  dgamma.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  Mat<S> dxhat = dy.array().rowwise() * gamma.row(0).array();
  Vec<S> mean_dxhat = dxhat.rowwise().sum() / static_cast<S>(d);
  Vec<S> mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum() / static_cast<S>(d);
  Mat<S> dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx.array() -= cache.xhat.array().colwise() * mean_dxhat_xhat.array();
  dx.array().colwise() *= cache.rstd.array();
  return dx;
}

// Exact (erf) GELU.
template <typename S>
Mat<S> gelu(const Mat<S>& u) {
  return u.unaryExpr([](S x) { return static_cast<S>(0.5) * x * (S(1) + std::erf(x * static_cast<S>(M_SQRT1_2))); });
}

template <typename S>
Mat<S> gelu_grad(const Mat<S>& u) {
  return u.unaryExpr([](S x) {
    const S cdf = static_cast<S>(0.5) * (S(1) + std::erf(x * static_cast<S>(M_SQRT1_2)));
    const S pdf = std::exp(static_cast<S>(-0.5) * x * x) * static_cast<S>(0.3989422804014327);
    return cdf + x * pdf;
  });
}

}  // namespace rexpath
