#pragma once

#include "homelist/blocking.hpp"
#include "homelist/cluster.hpp"
#include "homelist/config.hpp"
#include "homelist/decision_tree.hpp"
#include "homelist/error.hpp"
#include "homelist/indicators.hpp"
#include "homelist/ingest.hpp"
#include "homelist/levels.hpp"
#include "homelist/listing_model.hpp"
#include "homelist/normalize.hpp"
#include "homelist/pair_classifier.hpp"
#include "homelist/parallel.hpp"
#include "homelist/regression.hpp"
#include "homelist/synth.hpp"
#include "homelist/time_machine.hpp"
