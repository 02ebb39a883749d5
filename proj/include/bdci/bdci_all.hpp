#pragma once

#include "bdci/error.hpp"
#include "bdci/rd_core.hpp"
#include "bdci/interp.hpp"
#include "bdci/bd_classic.hpp"
#include "bdci/random.hpp"
#include "bdci/nn.hpp"
#include "bdci/segments.hpp"
#include "bdci/digest.hpp"
#include "bdci/bundle.hpp"
#include "bdci/bdci.hpp"
#include "bdci/parallel.hpp"
#include "bdci/synth.hpp"
#include "bdci/corpus.hpp"
#include "bdci/bench.hpp"
#include "bdci/rd_file.hpp"
