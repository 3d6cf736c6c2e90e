#pragma once

#include "msreg/error.hpp"
#include "msreg/image.hpp"
#include "msreg/image_io.hpp"
#include "msreg/scale_space.hpp"
#include "msreg/harris.hpp"
#include "msreg/piifd.hpp"
#include "msreg/kdtree.hpp"
#include "msreg/matching.hpp"
#include "msreg/transform.hpp"
#include "msreg/pipeline.hpp"
#include "msreg/harness.hpp"
