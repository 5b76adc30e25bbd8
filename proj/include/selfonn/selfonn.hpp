#pragma once

#include "selfonn/bench.hpp"
#include "selfonn/config.hpp"
#include "selfonn/dataset.hpp"
#include "selfonn/errors.hpp"
#include "selfonn/image.hpp"
#include "selfonn/layer.hpp"
#include "selfonn/metrics.hpp"
#include "selfonn/model.hpp"
#include "selfonn/ops.hpp"
#include "selfonn/optim.hpp"
#include "selfonn/parallel.hpp"
#include "selfonn/pipeline.hpp"
#include "selfonn/seed.hpp"
#include "selfonn/synth.hpp"
#include "selfonn/tensor.hpp"
#include "selfonn/trainer.hpp"
#include "selfonn/weights_io.hpp"
