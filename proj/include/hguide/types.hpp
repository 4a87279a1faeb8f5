// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace hguide {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace hguide
