// Copyright 2026 The phasemotion Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "phasemotion/checkpoint.hpp"
#include "phasemotion/data.hpp"
#include "phasemotion/error.hpp"
#include "phasemotion/eval.hpp"
#include "phasemotion/metrics.hpp"
#include "phasemotion/model.hpp"
#include "phasemotion/ops.hpp"
#include "phasemotion/phasespace.hpp"
#include "phasemotion/predictor.hpp"
#include "phasemotion/refiner.hpp"
#include "phasemotion/rng.hpp"
#include "phasemotion/skeleton.hpp"
#include "phasemotion/tape.hpp"
#include "phasemotion/tensor.hpp"
#include "phasemotion/training.hpp"
#include "phasemotion/gradcheck.hpp"
