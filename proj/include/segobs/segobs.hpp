// SPDX-License-Identifier: Apache-2.0
// Umbrella header for the segobs library.
#pragma once

#include "segobs/checkpoint.hpp"
#include "segobs/config.hpp"
#include "segobs/corruptions.hpp"
#include "segobs/evaluation.hpp"
#include "segobs/io.hpp"
#include "segobs/layers.hpp"
#include "segobs/losses.hpp"
#include "segobs/models.hpp"
#include "segobs/optim.hpp"
#include "segobs/pipeline.hpp"
#include "segobs/scenes.hpp"
#include "segobs/supervision.hpp"
#include "segobs/tensor.hpp"
