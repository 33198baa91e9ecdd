#pragma once

#include "evbench/core.hpp"
#include "evbench/est.hpp"
#include "evbench/experiment.hpp"
#include "evbench/io.hpp"
#include "evbench/metrics.hpp"
#include "evbench/model.hpp"
#include "evbench/noise.hpp"
#include "evbench/rng.hpp"
#include "evbench/svg.hpp"
#include "evbench/synth.hpp"
#include "evbench/train.hpp"
