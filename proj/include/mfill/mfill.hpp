#pragma once

// Umbrella header: design-point generation whose images fill a model-output
// manifold according to a target density, plus the oracles and transport
// distances used to verify it.

#include "mfill/core.hpp"
#include "mfill/engine.hpp"
#include "mfill/estimate.hpp"
#include "mfill/kernel.hpp"
#include "mfill/models.hpp"
#include "mfill/oracle.hpp"
#include "mfill/perturb.hpp"
#include "mfill/resample.hpp"
#include "mfill/rng.hpp"
#include "mfill/transport.hpp"
