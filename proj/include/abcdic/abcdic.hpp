#pragma once

// Umbrella header.

#include "abcdic/abc.hpp"
#include "abcdic/coalescent.hpp"
#include "abcdic/core.hpp"
#include "abcdic/dic.hpp"
#include "abcdic/distributions.hpp"
#include "abcdic/error.hpp"
#include "abcdic/experiment.hpp"
#include "abcdic/io.hpp"
#include "abcdic/parallel.hpp"
#include "abcdic/random.hpp"
#include "abcdic/registry.hpp"
#include "abcdic/toy_models.hpp"
