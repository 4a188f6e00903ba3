// Copyright 2026 The DBLN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "dbln/baseline_math.hpp"
#include "dbln/cli.hpp"
#include "dbln/data.hpp"
#include "dbln/detector.hpp"
#include "dbln/diffcore.hpp"
#include "dbln/evaluation.hpp"
#include "dbln/losses.hpp"
#include "dbln/network.hpp"
#include "dbln/params.hpp"
#include "dbln/recurrent.hpp"
#include "dbln/run_config.hpp"
#include "dbln/training.hpp"
