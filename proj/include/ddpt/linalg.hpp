#pragma once

#include <Eigen/Dense>

namespace ddpt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace ddpt
