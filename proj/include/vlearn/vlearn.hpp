#pragma once

#include "vlearn/camera.hpp"
#include "vlearn/config.hpp"
#include "vlearn/dataset.hpp"
#include "vlearn/error.hpp"
#include "vlearn/eval.hpp"
#include "vlearn/geometry.hpp"
#include "vlearn/image.hpp"
#include "vlearn/nn/adam.hpp"
#include "vlearn/nn/checkpoint.hpp"
#include "vlearn/nn/gradcheck.hpp"
#include "vlearn/nn/network.hpp"
#include "vlearn/nn/tensor.hpp"
#include "vlearn/params.hpp"
#include "vlearn/raster.hpp"
#include "vlearn/regressor.hpp"
#include "vlearn/rng.hpp"
#include "vlearn/text.hpp"
#include "vlearn/vae.hpp"
