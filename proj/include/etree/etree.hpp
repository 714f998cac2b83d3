#pragma once

#include "etree/bit_matrix.hpp"
#include "etree/bytes.hpp"
#include "etree/channel.hpp"
#include "etree/crypto.hpp"
#include "etree/csv.hpp"
#include "etree/error.hpp"
#include "etree/forest.hpp"
#include "etree/inference.hpp"
#include "etree/model.hpp"
#include "etree/model_io.hpp"
#include "etree/oblivious.hpp"
#include "etree/reference.hpp"
#include "etree/schema.hpp"
#include "etree/synthetic.hpp"
#include "etree/trainer.hpp"
#include "etree/uci.hpp"
