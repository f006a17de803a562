#pragma once

#include "rba/config.hpp"
#include "rba/dual_walk.hpp"
#include "rba/engine.hpp"
#include "rba/errors.hpp"
#include "rba/experiment.hpp"
#include "rba/io.hpp"
#include "rba/piles.hpp"
#include "rba/profiles.hpp"
#include "rba/rng.hpp"
#include "rba/size_spec.hpp"
#include "rba/validate.hpp"
