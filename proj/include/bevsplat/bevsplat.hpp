// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevsplat/bev.hpp"
#include "bevsplat/camera.hpp"
#include "bevsplat/common.hpp"
#include "bevsplat/decoder.hpp"
#include "bevsplat/features.hpp"
#include "bevsplat/image_io.hpp"
#include "bevsplat/io.hpp"
#include "bevsplat/pipeline.hpp"
#include "bevsplat/pointgen.hpp"
#include "bevsplat/raster.hpp"
#include "bevsplat/serialize.hpp"
#include "bevsplat/synth.hpp"
