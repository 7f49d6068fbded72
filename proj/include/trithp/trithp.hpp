#pragma once

#include "trithp/adam.hpp"
#include "trithp/attention.hpp"
#include "trithp/checkpoint.hpp"
#include "trithp/dataset.hpp"
#include "trithp/encodings.hpp"
#include "trithp/errors.hpp"
#include "trithp/evaluator.hpp"
#include "trithp/grad_check.hpp"
#include "trithp/gradient_suite.hpp"
#include "trithp/hawkes.hpp"
#include "trithp/intensity.hpp"
#include "trithp/model.hpp"
#include "trithp/rng.hpp"
#include "trithp/synthetic.hpp"
#include "trithp/tensor.hpp"
#include "trithp/trainer.hpp"
