// Copyright 2026 The subpool Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference checks of every hand-written backward pass, on
// small seeded instances.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace subpool {

struct GradcheckStage {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t evaluations = 0;  // finite-difference probes
  bool passed = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 7;
  bool degenerate = false;  // adds the near-degenerate pooling stage
  std::string stage;        // empty = every default stage
};

/// pooling, crossentropy, triplet, pipeline, pipeline-projection,
/// pipeline-average, pooling-degenerate.
const std::vector<std::string>& gradcheck_stage_names();

/// Throws InvalidArgument for an unknown stage name.
std::vector<GradcheckStage> run_gradcheck(const GradcheckOptions& options);

/// max_i |g_i - fd_i| / max(max |fd|, max |g|, 1e-300).
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace subpool
