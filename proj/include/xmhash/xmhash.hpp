/*
 * Copyright 2026 The xmhash Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "xmhash/dataset.hpp"
#include "xmhash/encoders.hpp"
#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/objective.hpp"
#include "xmhash/retrieval.hpp"
#include "xmhash/rng.hpp"
#include "xmhash/solvers.hpp"
#include "xmhash/synthetic.hpp"
#include "xmhash/trainer.hpp"
