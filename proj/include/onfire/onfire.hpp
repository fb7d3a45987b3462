#pragma once

#include "onfire/arch.hpp"
#include "onfire/cells.hpp"
#include "onfire/graph.hpp"
#include "onfire/head_trainer.hpp"
#include "onfire/image.hpp"
#include "onfire/ops.hpp"
#include "onfire/parallel.hpp"
#include "onfire/pipeline.hpp"
#include "onfire/preprocess.hpp"
#include "onfire/pruning.hpp"
#include "onfire/superpixel.hpp"
#include "onfire/synthetic.hpp"
#include "onfire/tensor.hpp"
#include "onfire/weight_file.hpp"
#include "onfire/weights.hpp"
