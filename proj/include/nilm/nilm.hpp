#pragma once

// Umbrella header for the NILM toolkit.

#include "nilm/adam.hpp"
#include "nilm/checkpoint.hpp"
#include "nilm/csv.hpp"
#include "nilm/dataset.hpp"
#include "nilm/errors.hpp"
#include "nilm/layers.hpp"
#include "nilm/metrics.hpp"
#include "nilm/model.hpp"
#include "nilm/network.hpp"
#include "nilm/power_series.hpp"
#include "nilm/random.hpp"
#include "nilm/synthetic.hpp"
#include "nilm/tensor.hpp"
#include "nilm/training.hpp"
#include "nilm/transfer.hpp"
#include "nilm/windowing.hpp"
