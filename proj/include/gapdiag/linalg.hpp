#pragma once

#include <Eigen/Dense>

namespace gapdiag {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

}  // namespace gapdiag
