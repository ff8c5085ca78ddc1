#pragma once

#include "dimerge/baselines.hpp"
#include "dimerge/diagnostics.hpp"
#include "dimerge/dtype.hpp"
#include "dimerge/error.hpp"
#include "dimerge/geometry.hpp"
#include "dimerge/merge.hpp"
#include "dimerge/parallel.hpp"
#include "dimerge/presets.hpp"
#include "dimerge/salience.hpp"
#include "dimerge/scope.hpp"
#include "dimerge/tensor.hpp"
#include "dimerge/tensor_store.hpp"
