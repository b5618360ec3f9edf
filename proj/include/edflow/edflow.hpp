#pragma once

#include "edflow/config.hpp"
#include "edflow/conformal.hpp"
#include "edflow/dirac.hpp"
#include "edflow/errors.hpp"
#include "edflow/flow.hpp"
#include "edflow/krylov.hpp"
#include "edflow/parabolic.hpp"
#include "edflow/pencil.hpp"
#include "edflow/perturbation.hpp"
#include "edflow/snapshot.hpp"
#include "edflow/torus.hpp"
