#pragma once

#include "mmfusion/baselines.hpp"
#include "mmfusion/bench.hpp"
#include "mmfusion/dma.hpp"
#include "mmfusion/log_math.hpp"
#include "mmfusion/particle_set.hpp"
#include "mmfusion/random.hpp"
#include "mmfusion/ssm.hpp"
#include "mmfusion/tracking_model.hpp"
#include "mmfusion/tracksim.hpp"
