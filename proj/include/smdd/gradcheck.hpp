// smdd/gradcheck.hpp

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
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "smdd/tensor.hpp"

namespace smdd {

struct GradCheckResult {
  /// max |analytic - numeric| / max(|numeric|_inf, |analytic|_inf), worst target.
  double max_rel_error = 0.0;
  std::size_t worst_target = 0;
};

/// Compares reverse-mode gradients against central differences. `build` must
/// bind every target with Tape::param() and return a scalar.
GradCheckResult check_gradients(const std::function<Var(Tape&)>& build, const std::vector<Matrix*>& targets,
                                double step = 1e-5);

}  // namespace smdd
