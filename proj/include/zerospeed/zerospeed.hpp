#pragma once

#include "config.hpp"
#include "decision.hpp"
#include "error.hpp"
#include "evalbench.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "imgproc.hpp"
#include "matching.hpp"
#include "pipeline.hpp"
#include "sift.hpp"
#include "synth.hpp"
#include "tracking.hpp"
