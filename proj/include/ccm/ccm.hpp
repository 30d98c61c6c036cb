#pragma once

#include "ccm/core.hpp"
#include "ccm/cv.hpp"
#include "ccm/density.hpp"
#include "ccm/es.hpp"
#include "ccm/io.hpp"
#include "ccm/metrics.hpp"
#include "ccm/models.hpp"
#include "ccm/qp.hpp"
#include "ccm/synth.hpp"
