#pragma once

#include "nkgp/calibration.hpp"
#include "nkgp/categorical.hpp"
#include "nkgp/error.hpp"
#include "nkgp/ess.hpp"
#include "nkgp/gp_classification.hpp"
#include "nkgp/gp_regression.hpp"
#include "nkgp/heuristics.hpp"
#include "nkgp/kernels.hpp"
#include "nkgp/linalg.hpp"
#include "nkgp/parallel.hpp"
#include "nkgp/random.hpp"

#include "nkgp/harness/config.hpp"
#include "nkgp/harness/corruption.hpp"
#include "nkgp/harness/dataset.hpp"
#include "nkgp/harness/experiment.hpp"
#include "nkgp/harness/grid.hpp"
#include "nkgp/harness/run_record.hpp"
#include "nkgp/harness/synthetic.hpp"
