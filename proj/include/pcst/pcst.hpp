#pragma once

#include "dependency_filter.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "manifest.hpp"
#include "mini_denoiser.hpp"
#include "model_io.hpp"
#include "netpbm.hpp"
#include "noise.hpp"
#include "pair_record.hpp"
#include "parallel.hpp"
#include "patch_craft.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "stats_verify.hpp"
#include "tensor_io.hpp"
