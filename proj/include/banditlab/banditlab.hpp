#pragma once

// Umbrella header.

#include "banditlab/bandits.hpp"
#include "banditlab/confidence.hpp"
#include "banditlab/data.hpp"
#include "banditlab/dataset.hpp"
#include "banditlab/harness.hpp"
#include "banditlab/nn.hpp"
#include "banditlab/ntk.hpp"
#include "banditlab/policies.hpp"
#include "banditlab/types.hpp"
