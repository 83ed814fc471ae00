// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "localsgd/error.hpp"
#include "localsgd/numkit.hpp"
#include "localsgd/textio.hpp"
#include "localsgd/dataio.hpp"
#include "localsgd/synthetic.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/quadratic.hpp"
#include "localsgd/simulator.hpp"
#include "localsgd/theory.hpp"
#include "localsgd/experiment.hpp"
