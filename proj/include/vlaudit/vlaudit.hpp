#pragma once

#include "vlaudit/config.hpp"
#include "vlaudit/datamodel.hpp"
#include "vlaudit/embedio.hpp"
#include "vlaudit/error.hpp"
#include "vlaudit/fairmetrics.hpp"
#include "vlaudit/hash.hpp"
#include "vlaudit/imagestats.hpp"
#include "vlaudit/parallel.hpp"
#include "vlaudit/pipeline.hpp"
#include "vlaudit/png_io.hpp"
#include "vlaudit/simcore.hpp"
#include "vlaudit/stats.hpp"
#include "vlaudit/variation.hpp"
