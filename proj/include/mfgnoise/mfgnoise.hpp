#pragma once

#include "core.hpp"
#include "coefficient.hpp"
#include "problem.hpp"
#include "problem_io.hpp"
#include "value_field.hpp"
#include "paths.hpp"
#include "feynman_kac.hpp"
#include "solver.hpp"
#include "monotone.hpp"
#include "diagnostics.hpp"
#include "reference.hpp"
