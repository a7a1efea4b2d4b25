#pragma once

// Umbrella header for the asfm library.

#include "asfm/autodiff.hpp"
#include "asfm/checkpoint.hpp"
#include "asfm/config.hpp"
#include "asfm/core.hpp"
#include "asfm/data.hpp"
#include "asfm/eval.hpp"
#include "asfm/geom.hpp"
#include "asfm/kdtree.hpp"
#include "asfm/losses.hpp"
#include "asfm/model.hpp"
#include "asfm/optim.hpp"
#include "asfm/parallel.hpp"
#include "asfm/rng.hpp"
#include "asfm/tensor.hpp"
#include "asfm/train.hpp"
