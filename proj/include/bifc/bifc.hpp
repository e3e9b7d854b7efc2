#pragma once

#include "bifc/augment/adversarial.hpp"
#include "bifc/augment/affine.hpp"
#include "bifc/augment/augmentor.hpp"
#include "bifc/cli/config.hpp"
#include "bifc/data/dataset.hpp"
#include "bifc/data/generator.hpp"
#include "bifc/data/metrics.hpp"
#include "bifc/data/pnm.hpp"
#include "bifc/data/raster.hpp"
#include "bifc/data/scene.hpp"
#include "bifc/diffcore/gradcheck.hpp"
#include "bifc/diffcore/layers.hpp"
#include "bifc/diffcore/ops.hpp"
#include "bifc/diffcore/optim.hpp"
#include "bifc/diffcore/rng.hpp"
#include "bifc/diffcore/tape.hpp"
#include "bifc/diffcore/tensor.hpp"
#include "bifc/fusion/bifcnet.hpp"
#include "bifc/fusion/checkpoint.hpp"
#include "bifc/fusion/fcf.hpp"
#include "bifc/fusion/fractal.hpp"
#include "bifc/fusion/train.hpp"
#include "bifc/gradient_suite.hpp"
#include "bifc/grasp/camera.hpp"
#include "bifc/grasp/contour.hpp"
#include "bifc/grasp/select.hpp"
