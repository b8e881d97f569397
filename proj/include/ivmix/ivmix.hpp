// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ivmix/core/error.hpp"
#include "ivmix/core/latent.hpp"
#include "ivmix/core/rng.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/core/tensor_io.hpp"
#include "ivmix/scoremodels/file_backend.hpp"
#include "ivmix/scoremodels/framewise.hpp"
#include "ivmix/scoremodels/gaussian_mixture.hpp"
#include "ivmix/scoremodels/score_model.hpp"
#include "ivmix/scoremodels/temporal.hpp"
#include "ivmix/sampler/config.hpp"
#include "ivmix/sampler/ddim.hpp"
#include "ivmix/sampler/mixed_sampler.hpp"
#include "ivmix/sampler/trajectory.hpp"
#include "ivmix/analysis/ode_oracle.hpp"
#include "ivmix/analysis/order.hpp"
#include "ivmix/analysis/quality.hpp"
#include "ivmix/analysis/taylor.hpp"
