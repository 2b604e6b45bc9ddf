#pragma once

#include "snapsci/error.hpp"
#include "snapsci/tensor.hpp"
#include "snapsci/ops.hpp"
#include "snapsci/adam.hpp"
#include "snapsci/npy.hpp"
#include "snapsci/forward_model.hpp"
#include "snapsci/scene.hpp"
#include "snapsci/srn.hpp"
#include "snapsci/gap.hpp"
#include "snapsci/tv.hpp"
#include "snapsci/metrics.hpp"
#include "snapsci/analysis.hpp"
#include "snapsci/train.hpp"
#include "snapsci/png.hpp"
#include "snapsci/config.hpp"
#include "snapsci/workbench.hpp"
