#pragma once

// Differentiable building blocks, templated on the scalar type. Training runs
// in float; the gradient checks instantiate the same code in double.

#include "xnap/neural/adam.hpp"
#include "xnap/neural/gradcheck.hpp"
#include "xnap/neural/layers.hpp"
#include "xnap/neural/losses.hpp"
#include "xnap/neural/lstm.hpp"
#include "xnap/neural/types.hpp"
