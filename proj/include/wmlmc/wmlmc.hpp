#pragma once

#include "wmlmc/alias_table.hpp"
#include "wmlmc/errors.hpp"
#include "wmlmc/experiments.hpp"
#include "wmlmc/increments.hpp"
#include "wmlmc/levy.hpp"
#include "wmlmc/mlmc.hpp"
#include "wmlmc/models.hpp"
#include "wmlmc/moment_match.hpp"
#include "wmlmc/random.hpp"
#include "wmlmc/schemes.hpp"
