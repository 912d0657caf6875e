#pragma once

#include "tabdistill/data.hpp"
#include "tabdistill/encoder.hpp"
#include "tabdistill/errors.hpp"
#include "tabdistill/eval.hpp"
#include "tabdistill/external_encoder.hpp"
#include "tabdistill/hypernet.hpp"
#include "tabdistill/matrix.hpp"
#include "tabdistill/model_io.hpp"
#include "tabdistill/network.hpp"
#include "tabdistill/rng.hpp"
#include "tabdistill/serialize.hpp"
#include "tabdistill/synthetic.hpp"
#include "tabdistill/train.hpp"
