#pragma once

#include "polypseg/conv.hpp"
#include "polypseg/data.hpp"
#include "polypseg/errors.hpp"
#include "polypseg/gradcheck.hpp"
#include "polypseg/gradsuite.hpp"
#include "polypseg/layers.hpp"
#include "polypseg/losses.hpp"
#include "polypseg/metrics.hpp"
#include "polypseg/mspp.hpp"
#include "polypseg/network.hpp"
#include "polypseg/ops.hpp"
#include "polypseg/paab.hpp"
#include "polypseg/tensor.hpp"
#include "polypseg/trainer.hpp"
