#pragma once

#include "stridezero/common.hpp"
#include "stridezero/cost.hpp"
#include "stridezero/io.hpp"
#include "stridezero/kernels.hpp"
#include "stridezero/metrics.hpp"
#include "stridezero/netspec.hpp"
#include "stridezero/network.hpp"
#include "stridezero/pipeline.hpp"
#include "stridezero/raster.hpp"
#include "stridezero/tensor.hpp"
#include "stridezero/trainer.hpp"
#include "stridezero/transform.hpp"
#include "stridezero/weights.hpp"
