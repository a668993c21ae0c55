#pragma once

#include "dlattice/config.hpp"
#include "dlattice/core.hpp"
#include "dlattice/dde.hpp"
#include "dlattice/error.hpp"
#include "dlattice/fhn.hpp"
#include "dlattice/io.hpp"
#include "dlattice/lambertw.hpp"
#include "dlattice/pattern.hpp"
#include "dlattice/roots.hpp"
#include "dlattice/sl.hpp"
