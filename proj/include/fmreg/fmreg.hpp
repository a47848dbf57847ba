// Copyright 2026 The fmreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Umbrella header.

#include "fmreg/arap.hpp"
#include "fmreg/body_model.hpp"
#include "fmreg/common.hpp"
#include "fmreg/descriptors.hpp"
#include "fmreg/distance.hpp"
#include "fmreg/fitting.hpp"
#include "fmreg/funmap.hpp"
#include "fmreg/humanoid.hpp"
#include "fmreg/io.hpp"
#include "fmreg/knn.hpp"
#include "fmreg/landmarks.hpp"
#include "fmreg/laplacian.hpp"
#include "fmreg/mesh.hpp"
#include "fmreg/perturb.hpp"
#include "fmreg/pipeline.hpp"
#include "fmreg/remesh.hpp"
#include "fmreg/shapes.hpp"
#include "fmreg/skeleton.hpp"
#include "fmreg/spectral.hpp"
