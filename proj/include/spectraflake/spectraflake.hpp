#pragma once

#include "spectraflake/cube.hpp"
#include "spectraflake/envi.hpp"
#include "spectraflake/error.hpp"
#include "spectraflake/mask_io.hpp"
#include "spectraflake/metrics.hpp"
#include "spectraflake/models.hpp"
#include "spectraflake/nn.hpp"
#include "spectraflake/parallel.hpp"
#include "spectraflake/pipeline.hpp"
#include "spectraflake/preprocess.hpp"
#include "spectraflake/selfcheck.hpp"
#include "spectraflake/synth.hpp"
#include "spectraflake/tensor.hpp"
#include "spectraflake/weights_io.hpp"
