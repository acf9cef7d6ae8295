#pragma once
// Umbrella header.

#include <smahp/aft.hpp>
#include <smahp/core.hpp>
#include <smahp/error.hpp>
#include <smahp/gehan.hpp>
#include <smahp/inference.hpp>
#include <smahp/io.hpp>
#include <smahp/penalized_lm.hpp>
#include <smahp/pipeline.hpp>
#include <smahp/screening.hpp>
#include <smahp/simulation.hpp>
