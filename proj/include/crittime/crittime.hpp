#pragma once

#include "crittime/errors.hpp"
#include "crittime/qc_sets.hpp"
#include "crittime/text_format.hpp"
#include "crittime/closed_loop.hpp"
#include "crittime/scenario.hpp"
#include "crittime/lifting.hpp"
#include "crittime/sdp.hpp"
#include "crittime/critical_time.hpp"
#include "crittime/simulation.hpp"
#include "crittime/quadtank.hpp"
#include "crittime/demo.hpp"
