#pragma once

// Everything except gem/png.hpp, which needs libpng.
#include "gem/core.hpp"
#include "gem/dataset.hpp"
#include "gem/deform.hpp"
#include "gem/eigenmodel.hpp"
#include "gem/error.hpp"
#include "gem/image.hpp"
#include "gem/io.hpp"
#include "gem/metrics.hpp"
#include "gem/parallel.hpp"
#include "gem/refine.hpp"
#include "gem/regressor.hpp"
#include "gem/renderer.hpp"
#include "gem/synth.hpp"
