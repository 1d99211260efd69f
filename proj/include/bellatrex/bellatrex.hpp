#pragma once

#include "bellatrex/core.hpp"
#include "bellatrex/data.hpp"
#include "bellatrex/eval.hpp"
#include "bellatrex/explain.hpp"
#include "bellatrex/forest.hpp"
#include "bellatrex/metrics.hpp"
#include "bellatrex/numeric.hpp"
#include "bellatrex/render.hpp"
#include "bellatrex/serialize.hpp"
#include "bellatrex/survival.hpp"
#include "bellatrex/tree.hpp"
