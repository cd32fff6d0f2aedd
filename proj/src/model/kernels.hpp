#pragma once

#include <Eigen/Core>

#include "sat/matrix.hpp"
#include "sat/model.hpp"

namespace sat::detail {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap view(const Matrix& m) { return ConstMap(m.data(), m.rows(), m.cols()); }
inline MutMap view(Matrix& m) { return MutMap(m.data(), m.rows(), m.cols()); }

// y = x W + b with W stored [in, out].
inline Matrix linear(const Matrix& x, const Tensor& weight, const Tensor& bias) {
    const auto in = weight.shape[0];
    const auto out = weight.shape[1];
    Matrix y(x.rows(), out);
    ConstMap w(weight.data.data(), in, out);
    Eigen::Map<const Eigen::RowVectorXf> b(bias.data.data(), out);
    auto Y = view(y);
    Y.noalias() = view(x) * w;
    Y.rowwise() += b;
    return y;
}

} // namespace sat::detail
