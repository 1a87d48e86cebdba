#pragma once

#include "csl/augment.hpp"
#include "csl/checkpoint.hpp"
#include "csl/config.hpp"
#include "csl/data.hpp"
#include "csl/downstream.hpp"
#include "csl/encoder.hpp"
#include "csl/error.hpp"
#include "csl/gradcheck.hpp"
#include "csl/objective.hpp"
#include "csl/pipeline.hpp"
#include "csl/synthetic.hpp"
#include "csl/train.hpp"
