#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace fss {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using RowX = Eigen::RowVectorXd;
using ArrX = Eigen::ArrayXd;
using VecXi = Eigen::VectorXi;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

}  // namespace fss
