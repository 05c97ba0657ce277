#pragma once

#include "nlcausal/air.hpp"
#include "nlcausal/baselines.hpp"
#include "nlcausal/bench.hpp"
#include "nlcausal/cli.hpp"
#include "nlcausal/core.hpp"
#include "nlcausal/inference.hpp"
#include "nlcausal/io.hpp"
#include "nlcausal/simgen.hpp"
#include "nlcausal/sir.hpp"
#include "nlcausal/stage2.hpp"
