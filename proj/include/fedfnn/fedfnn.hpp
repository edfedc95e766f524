#pragma once

#include "fedfnn/data.hpp"
#include "fedfnn/dataset.hpp"
#include "fedfnn/federation.hpp"
#include "fedfnn/fnn.hpp"
#include "fedfnn/gradient.hpp"
#include "fedfnn/harness.hpp"
#include "fedfnn/matrix.hpp"
#include "fedfnn/rng.hpp"
#include "fedfnn/rule.hpp"
#include "fedfnn/trainer.hpp"
