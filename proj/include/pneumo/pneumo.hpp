#pragma once

#include "pneumo/types.hpp"
#include "pneumo/ini.hpp"
#include "pneumo/config.hpp"
#include "pneumo/stats.hpp"
#include "pneumo/plant.hpp"
#include "pneumo/characterize.hpp"
#include "pneumo/datagen.hpp"
#include "pneumo/learn/matrices.hpp"
#include "pneumo/learn/standardizer.hpp"
#include "pneumo/learn/mlp.hpp"
#include "pneumo/learn/model_io.hpp"
#include "pneumo/spline.hpp"
#include "pneumo/track.hpp"
#include "pneumo/csv.hpp"
#include "pneumo/manifest.hpp"
