#pragma once

#include "advbayes/core/types.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/diagnostics.hpp"
#include "advbayes/core/conjugate.hpp"
#include "advbayes/core/models.hpp"
#include "advbayes/core/posterior.hpp"
#include "advbayes/attack/feasible_set.hpp"
#include "advbayes/attack/trace.hpp"
#include "advbayes/attack/point.hpp"
#include "advbayes/attack/appd.hpp"
#include "advbayes/attack/ppd.hpp"
#include "advbayes/analytic/analytic.hpp"
#include "advbayes/baselines/fgsm.hpp"
#include "advbayes/baselines/graybox.hpp"
#include "advbayes/harness/config.hpp"
#include "advbayes/harness/dataset_io.hpp"
#include "advbayes/harness/synthetic.hpp"
#include "advbayes/harness/sep.hpp"
#include "advbayes/harness/gradcheck.hpp"
#include "advbayes/harness/entropy.hpp"
#include "advbayes/harness/graybox_experiment.hpp"
