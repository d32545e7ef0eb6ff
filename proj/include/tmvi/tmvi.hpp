#pragma once

// Umbrella header for the tmvi solver library.

#include "tmvi/core.hpp"
#include "tmvi/crn.hpp"
#include "tmvi/drivers.hpp"
#include "tmvi/homp.hpp"
#include "tmvi/oracle.hpp"
#include "tmvi/problems.hpp"
#include "tmvi/trace_io.hpp"
#include "tmvi/verify.hpp"
