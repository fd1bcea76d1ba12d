#pragma once

#include "flm/error.hpp"
#include "flm/fields.hpp"
#include "flm/field_io.hpp"
#include "flm/kernels.hpp"
#include "flm/parallel.hpp"
#include "flm/assembly.hpp"
#include "flm/regression.hpp"
#include "flm/model.hpp"
#include "flm/synth.hpp"
#include "flm/metrics.hpp"
#include "flm/probe.hpp"
