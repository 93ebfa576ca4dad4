#pragma once

#include "stdo/error.hpp"
#include "stdo/tensor.hpp"
#include "stdo/rng.hpp"
#include "stdo/nn.hpp"
#include "stdo/model.hpp"
#include "stdo/video_io.hpp"
#include "stdo/metrics.hpp"
#include "stdo/parallel.hpp"
#include "stdo/trainer.hpp"
#include "stdo/chunking.hpp"
#include "stdo/training.hpp"
#include "stdo/codec.hpp"
#include "stdo/manifest.hpp"
