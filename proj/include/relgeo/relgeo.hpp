// Umbrella header.
#pragma once

#include "relgeo/alignment.hpp"
#include "relgeo/config.hpp"
#include "relgeo/eval.hpp"
#include "relgeo/experiments.hpp"
#include "relgeo/geometry.hpp"
#include "relgeo/io.hpp"
#include "relgeo/models.hpp"
#include "relgeo/numerics.hpp"
#include "relgeo/parallel.hpp"
#include "relgeo/relrep.hpp"
#include "relgeo/synthbench.hpp"
#include "relgeo/training.hpp"
