#pragma once

#include "flowcast/baselines.hpp"
#include "flowcast/checkpoint.hpp"
#include "flowcast/config.hpp"
#include "flowcast/csv.hpp"
#include "flowcast/dlf/hs_tree.hpp"
#include "flowcast/dlf/model.hpp"
#include "flowcast/dlf/neighbors.hpp"
#include "flowcast/dlf/train.hpp"
#include "flowcast/embeddings.hpp"
#include "flowcast/error.hpp"
#include "flowcast/evalkit.hpp"
#include "flowcast/graph_core.hpp"
#include "flowcast/netstats.hpp"
#include "flowcast/rng.hpp"
#include "flowcast/sparse.hpp"
#include "flowcast/synth.hpp"
#include "flowcast/volume.hpp"
