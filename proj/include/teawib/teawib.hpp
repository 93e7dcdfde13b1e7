#pragma once

#include "teawib/attacks.hpp"
#include "teawib/attribution.hpp"
#include "teawib/checkpoint.hpp"
#include "teawib/data.hpp"
#include "teawib/gradcheck.hpp"
#include "teawib/image_io.hpp"
#include "teawib/losses.hpp"
#include "teawib/metrics.hpp"
#include "teawib/nets.hpp"
#include "teawib/optim.hpp"
#include "teawib/registry.hpp"
#include "teawib/stats.hpp"
#include "teawib/training.hpp"
#include "teawib/transforms.hpp"
#include "teawib/wib.hpp"
