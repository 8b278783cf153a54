#pragma once

// Umbrella header for the whole library.

#include "aao/ambiguity.hpp"
#include "aao/analysis.hpp"
#include "aao/checkpoint.hpp"
#include "aao/data.hpp"
#include "aao/errors.hpp"
#include "aao/grad_check.hpp"
#include "aao/losses.hpp"
#include "aao/model.hpp"
#include "aao/optim.hpp"
#include "aao/tensor.hpp"
#include "aao/tokenizer.hpp"
#include "aao/train.hpp"
