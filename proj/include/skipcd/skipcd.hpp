#pragma once

#include "skipcd/checkpoint.hpp"
#include "skipcd/config.hpp"
#include "skipcd/dataset.hpp"
#include "skipcd/decode.hpp"
#include "skipcd/error.hpp"
#include "skipcd/harness.hpp"
#include "skipcd/lens.hpp"
#include "skipcd/ops.hpp"
#include "skipcd/rng.hpp"
#include "skipcd/script.hpp"
#include "skipcd/strategy.hpp"
#include "skipcd/tokenizer.hpp"
#include "skipcd/transformer.hpp"
#include "skipcd/weights.hpp"
