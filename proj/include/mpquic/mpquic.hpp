#pragma once

#include "mpquic/congestion.hpp"
#include "mpquic/core.hpp"
#include "mpquic/metrics.hpp"
#include "mpquic/netsim.hpp"
#include "mpquic/receiver.hpp"
#include "mpquic/rtt.hpp"
#include "mpquic/scenario.hpp"
#include "mpquic/scheduler.hpp"
#include "mpquic/sender.hpp"
#include "mpquic/simulation.hpp"
