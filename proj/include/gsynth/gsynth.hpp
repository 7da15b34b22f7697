#pragma once

#include <gsynth/annotation.hpp>
#include <gsynth/config.hpp>
#include <gsynth/error.hpp>
#include <gsynth/image.hpp>
#include <gsynth/metrics.hpp>
#include <gsynth/pipeline.hpp>
#include <gsynth/ply.hpp>
#include <gsynth/rasterizer.hpp>
#include <gsynth/scene_edit.hpp>
#include <gsynth/sh.hpp>
#include <gsynth/trajectory.hpp>
#include <gsynth/types.hpp>
