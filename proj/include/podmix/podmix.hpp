#pragma once

#include "podmix/audio.hpp"
#include "podmix/bench.hpp"
#include "podmix/dataset.hpp"
#include "podmix/error.hpp"
#include "podmix/listening.hpp"
#include "podmix/manifest.hpp"
#include "podmix/metrics.hpp"
#include "podmix/mix.hpp"
#include "podmix/random.hpp"
#include "podmix/recipe.hpp"
#include "podmix/report.hpp"
#include "podmix/separation.hpp"
#include "podmix/spectral.hpp"
