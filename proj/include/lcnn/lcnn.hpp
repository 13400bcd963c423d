#ifndef LCNN_LCNN_HPP
#define LCNN_LCNN_HPP

// Umbrella header.

#include "lcnn/analysis.hpp"
#include "lcnn/classify.hpp"
#include "lcnn/config.hpp"
#include "lcnn/data.hpp"
#include "lcnn/error.hpp"
#include "lcnn/gradcheck.hpp"
#include "lcnn/label_consistency.hpp"
#include "lcnn/model_io.hpp"
#include "lcnn/nn.hpp"
#include "lcnn/optim.hpp"
#include "lcnn/tensor.hpp"

#endif  // LCNN_LCNN_HPP
