#pragma once

// Umbrella header for the GeNIS benchmark toolkit.

#include "genis/core.hpp"
#include "genis/csv.hpp"
#include "genis/eval.hpp"
#include "genis/explain.hpp"
#include "genis/featsel.hpp"
#include "genis/flow_table.hpp"
#include "genis/neural.hpp"
#include "genis/pipeline.hpp"
#include "genis/preprocess.hpp"
#include "genis/serialize.hpp"
#include "genis/synth.hpp"
#include "genis/taxonomy.hpp"
#include "genis/trees.hpp"
