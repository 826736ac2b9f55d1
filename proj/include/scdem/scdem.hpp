#pragma once

#include "scdem/backbones.hpp"
#include "scdem/engine.hpp"
#include "scdem/errors.hpp"
#include "scdem/experts.hpp"
#include "scdem/harness/checkpoint.hpp"
#include "scdem/harness/config.hpp"
#include "scdem/harness/dataset.hpp"
#include "scdem/harness/experiment.hpp"
#include "scdem/harness/metrics.hpp"
#include "scdem/harness/report.hpp"
#include "scdem/harness/stream.hpp"
#include "scdem/inference.hpp"
#include "scdem/numerics/dense.hpp"
#include "scdem/numerics/ops.hpp"
#include "scdem/numerics/optim.hpp"
#include "scdem/numerics/random.hpp"
#include "scdem/numerics/tensor.hpp"
#include "scdem/pretrain.hpp"
#include "scdem/regularizers/losses.hpp"
#include "scdem/regularizers/sinkhorn.hpp"
