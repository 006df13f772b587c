#ifndef NIDRECON_NIDRECON_HPP
#define NIDRECON_NIDRECON_HPP

#include "config.hpp"
#include "diffusion.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "functional.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "optimizer.hpp"
#include "phantom.hpp"
#include "radon.hpp"

#endif
