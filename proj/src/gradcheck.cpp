// src/gradcheck.cpp

// Copyright 2026  The smdd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.
#include "smdd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace smdd {

GradCheckResult check_gradients(const std::function<Var(Tape&)>& build, const std::vector<Matrix*>& targets,
                                double step) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
    for (const Matrix* target : targets) {
      const Matrix* g = tape.param_grad(*target);
      analytic.push_back(g ? *g : Matrix::Zero(target->rows(), target->cols()));
    }
  }

  auto eval = [&build] {
    Tape tape(false);
    return build(tape).value()(0, 0);
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Matrix& m = *targets[k];
    if (m.size() == 0) continue;
    Matrix numeric(m.rows(), m.cols());
    for (Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + step;
      const double up = eval();
      m.data()[i] = saved - step;
      const double down = eval();
      m.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    const double scale = std::max({numeric.cwiseAbs().maxCoeff(), analytic[k].cwiseAbs().maxCoeff(), 1e-12});
    const double err = (analytic[k] - numeric).cwiseAbs().maxCoeff() / scale;
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_target = k;
    }
  }
  return result;
}

}  // namespace smdd
