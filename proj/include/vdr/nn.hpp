#pragma once

// Dense 2-d convolution kernels over feature maps stored as
// (channels x side*side) matrices, spatial index = row * side + col.
// Everything here is templated on the scalar type; the model instantiates
// double.

#include <Eigen/Dense>

#include "vdr/error.hpp"

namespace vdr::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ConvShape {
  int kernel = 3;
  int stride = 1;
  int padding = 0;

  /// Output side of a forward convolution over an `in_side` square input.
  int conv_out(int in_side) const { return (in_side + 2 * padding - kernel) / stride + 1; }
  /// Output side of the transposed convolution.
  int transpose_out(int in_side) const { return (in_side - 1) * stride - 2 * padding + kernel; }
};

/// Unfolds every receptive field of `x` (C x side^2) into a column of the
/// result, shape (C*k*k) x out^2. Row order is (channel, kr, kc).
template <typename Derived>
Matrix<typename Derived::Scalar> im2col(const Eigen::MatrixBase<Derived>& x, int side,
                                        const ConvShape& g) {
  using Scalar = typename Derived::Scalar;
  const int channels = static_cast<int>(x.rows());
  const int out = g.conv_out(side);
  const int k = g.kernel;
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(channels) * k * k,
                                             static_cast<Eigen::Index>(out) * out);
  for (int c = 0; c < channels; ++c) {
    for (int kr = 0; kr < k; ++kr) {
      for (int kc = 0; kc < k; ++kc) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + kr) * k + kc;
        for (int orow = 0; orow < out; ++orow) {
          const int ir = orow * g.stride - g.padding + kr;
          if (ir < 0 || ir >= side) continue;
          for (int ocol = 0; ocol < out; ++ocol) {
            const int ic = ocol * g.stride - g.padding + kc;
            if (ic < 0 || ic >= side) continue;
            cols(row, static_cast<Eigen::Index>(orow) * out + ocol) =
                x(c, static_cast<Eigen::Index>(ir) * side + ic);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters columns back onto a (C x side^2) map,
/// accumulating overlaps.
template <typename Derived>
Matrix<typename Derived::Scalar> col2im(const Eigen::MatrixBase<Derived>& cols, int channels,
                                        int side, const ConvShape& g) {
  using Scalar = typename Derived::Scalar;
  const int out = g.conv_out(side);
  const int k = g.kernel;
  if (cols.rows() != static_cast<Eigen::Index>(channels) * k * k ||
      cols.cols() != static_cast<Eigen::Index>(out) * out) {
    throw Error(ErrorCode::ShapeMismatch, "col2im: column matrix has the wrong shape");
  }
  Matrix<Scalar> x = Matrix<Scalar>::Zero(channels, static_cast<Eigen::Index>(side) * side);
  for (int c = 0; c < channels; ++c) {
    for (int kr = 0; kr < k; ++kr) {
      for (int kc = 0; kc < k; ++kc) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + kr) * k + kc;
        for (int orow = 0; orow < out; ++orow) {
          const int ir = orow * g.stride - g.padding + kr;
          if (ir < 0 || ir >= side) continue;
          for (int ocol = 0; ocol < out; ++ocol) {
            const int ic = ocol * g.stride - g.padding + kc;
            if (ic < 0 || ic >= side) continue;
            x(c, static_cast<Eigen::Index>(ir) * side + ic) +=
                cols(row, static_cast<Eigen::Index>(orow) * out + ocol);
          }
        }
      }
    }
  }
  return x;
}

/// y = W * im2col(x) + b. `weight` is Cout x (Cin*k*k).
template <typename Scalar>
Matrix<Scalar> conv2d(const Matrix<Scalar>& x, int side, const Matrix<Scalar>& weight,
                      const Vector<Scalar>& bias, const ConvShape& g) {
  Matrix<Scalar> y;
  y.noalias() = weight * im2col(x, side, g);
  y.colwise() += bias;
  return y;
}

template <typename Scalar>
struct ConvGrads {
  Matrix<Scalar> input;
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Matrix<Scalar>& x, int side, const Matrix<Scalar>& weight,
                                  const Matrix<Scalar>& grad_out, const ConvShape& g) {
  ConvGrads<Scalar> grads;
  const Matrix<Scalar> cols = im2col(x, side, g);
  grads.weight.noalias() = grad_out * cols.transpose();
  grads.bias = grad_out.rowwise().sum();
  Matrix<Scalar> grad_cols;
  grad_cols.noalias() = weight.transpose() * grad_out;
  grads.input = col2im(grad_cols, static_cast<int>(x.rows()), side, g);
  return grads;
}

/// Transposed convolution: the adjoint of conv2d in its input. `weight` is
/// Cin x (Cout*k*k); the output side is g.transpose_out(in_side).
template <typename Scalar>
Matrix<Scalar> conv_transpose2d(const Matrix<Scalar>& x, const Matrix<Scalar>& weight,
                                const Vector<Scalar>& bias, int in_side, const ConvShape& g) {
  const int out_side = g.transpose_out(in_side);
  if (g.conv_out(out_side) != in_side) {
    throw Error(ErrorCode::BadSide, "transposed convolution geometry does not invert");
  }
  const int out_channels = static_cast<int>(bias.size());
  Matrix<Scalar> cols;
  cols.noalias() = weight.transpose() * x;
  Matrix<Scalar> y = col2im(cols, out_channels, out_side, g);
  y.colwise() += bias;
  return y;
}

template <typename Scalar>
ConvGrads<Scalar> conv_transpose2d_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& weight,
                                            int in_side, const Matrix<Scalar>& grad_out,
                                            const ConvShape& g) {
  ConvGrads<Scalar> grads;
  const int out_side = g.transpose_out(in_side);
  const Matrix<Scalar> grad_cols = im2col(grad_out, out_side, g);
  grads.input.noalias() = weight * grad_cols;
  grads.weight.noalias() = x * grad_cols.transpose();
  grads.bias = grad_out.rowwise().sum();
  return grads;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// Gradient of relu evaluated at pre-activation `pre`.
template <typename DerivedPre, typename DerivedGrad>
auto relu_backward(const Eigen::MatrixBase<DerivedPre>& pre,
                   const Eigen::MatrixBase<DerivedGrad>& grad) {
  using Scalar = typename DerivedPre::Scalar;
  return (pre.array() > Scalar(0)).template cast<Scalar>().matrix().cwiseProduct(grad);
}

}  // namespace vdr::nn
