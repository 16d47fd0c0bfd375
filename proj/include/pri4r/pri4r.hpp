#pragma once

// single include pulling in the whole library

#include "pri4r/rng.hpp"
#include "pri4r/tensor.hpp"
#include "pri4r/nn.hpp"
#include "pri4r/checkpoint.hpp"
#include "pri4r/geometry.hpp"
#include "pri4r/toyworld.hpp"
#include "pri4r/supervision.hpp"
#include "pri4r/policy.hpp"
#include "pri4r/trainer.hpp"
#include "pri4r/model_io.hpp"
#include "pri4r/eval.hpp"
#include "pri4r/gradcheck.hpp"
#include "pri4r/svg.hpp"
