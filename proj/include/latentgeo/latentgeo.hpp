#pragma once

#include "latentgeo/common.hpp"
#include "latentgeo/geodesic.hpp"
#include "latentgeo/geometry.hpp"
#include "latentgeo/gp_model.hpp"
#include "latentgeo/io.hpp"
#include "latentgeo/kernel.hpp"
#include "latentgeo/oracle.hpp"
#include "latentgeo/parallel.hpp"
