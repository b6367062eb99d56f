// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flowmotion/benchmark.hpp"
#include "flowmotion/csv.hpp"
#include "flowmotion/guidance.hpp"
#include "flowmotion/io.hpp"
#include "flowmotion/metrics.hpp"
#include "flowmotion/mlp_field.hpp"
#include "flowmotion/pipeline.hpp"
#include "flowmotion/regularize.hpp"
#include "flowmotion/rng.hpp"
#include "flowmotion/sampler.hpp"
#include "flowmotion/tensor.hpp"
#include "flowmotion/time_grid.hpp"
#include "flowmotion/toy_world.hpp"
#include "flowmotion/velocity_field.hpp"
