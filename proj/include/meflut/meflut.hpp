#pragma once

#include "meflut/baseline.hpp"
#include "meflut/bench.hpp"
#include "meflut/checkpoint.hpp"
#include "meflut/color.hpp"
#include "meflut/error.hpp"
#include "meflut/image.hpp"
#include "meflut/image_io.hpp"
#include "meflut/lut_engine.hpp"
#include "meflut/lut_io.hpp"
#include "meflut/mef_ssim.hpp"
#include "meflut/metrics.hpp"
#include "meflut/network.hpp"
#include "meflut/pyramid.hpp"
#include "meflut/resample.hpp"
#include "meflut/synthetic.hpp"
#include "meflut/training.hpp"
