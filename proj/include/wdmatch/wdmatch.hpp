#pragma once

// Umbrella header for the WD-Match library.

#include "wdmatch/checkpoint.hpp"
#include "wdmatch/config.hpp"
#include "wdmatch/data.hpp"
#include "wdmatch/errors.hpp"
#include "wdmatch/eval.hpp"
#include "wdmatch/graph.hpp"
#include "wdmatch/history.hpp"
#include "wdmatch/models.hpp"
#include "wdmatch/optim.hpp"
#include "wdmatch/rng.hpp"
#include "wdmatch/selftest.hpp"
#include "wdmatch/tensor.hpp"
#include "wdmatch/trainer.hpp"
#include "wdmatch/wdreg.hpp"
