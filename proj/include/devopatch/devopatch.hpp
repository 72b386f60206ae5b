#pragma once

#include "devopatch/image.hpp"
#include "devopatch/patch.hpp"
#include "devopatch/fitness.hpp"
#include "devopatch/oracle.hpp"
#include "devopatch/synthetic_oracle.hpp"
#include "devopatch/engine.hpp"
#include "devopatch/metrics.hpp"
