#pragma once

#include "qlink/dqp.hpp"
#include "qlink/engine.hpp"
#include "qlink/esp.hpp"
#include "qlink/experiment.hpp"
#include "qlink/metrics.hpp"
#include "qlink/network.hpp"
#include "qlink/physical_layer.hpp"
#include "qlink/request.hpp"
#include "qlink/rng.hpp"
#include "qlink/topology.hpp"
#include "qlink/types.hpp"
#include "qlink/workload.hpp"
