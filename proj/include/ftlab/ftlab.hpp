#pragma once

#include "ftlab/error.hpp"
#include "ftlab/random.hpp"
#include "ftlab/linalg.hpp"
#include "ftlab/datasets.hpp"
#include "ftlab/linear_ft.hpp"
#include "ftlab/deep_linear.hpp"
#include "ftlab/ntk.hpp"
#include "ftlab/mnist.hpp"
