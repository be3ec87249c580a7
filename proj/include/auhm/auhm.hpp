#pragma once

#include "auhm/augmentation.hpp"
#include "auhm/codec.hpp"
#include "auhm/config.hpp"
#include "auhm/dataset.hpp"
#include "auhm/errors.hpp"
#include "auhm/image.hpp"
#include "auhm/io.hpp"
#include "auhm/metrics.hpp"
#include "auhm/model.hpp"
#include "auhm/ops.hpp"
#include "auhm/optim.hpp"
#include "auhm/parallel.hpp"
#include "auhm/registration.hpp"
#include "auhm/synth.hpp"
#include "auhm/tensor.hpp"
#include "auhm/trainer.hpp"
