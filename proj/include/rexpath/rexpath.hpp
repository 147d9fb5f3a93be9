#pragma once

#include "rexpath/common.hpp"
#include "rexpath/text.hpp"
#include "rexpath/html.hpp"
#include "rexpath/dom.hpp"
#include "rexpath/xpath_algebra.hpp"
#include "rexpath/popularity.hpp"
#include "rexpath/vocab.hpp"
#include "rexpath/corpus.hpp"
#include "rexpath/synthetic.hpp"
#include "rexpath/featurize.hpp"
#include "rexpath/tensor.hpp"
#include "rexpath/params.hpp"
#include "rexpath/encoder.hpp"
#include "rexpath/pair_extractor.hpp"
#include "rexpath/model.hpp"
#include "rexpath/optimizer.hpp"
#include "rexpath/checkpoint.hpp"
#include "rexpath/metrics.hpp"
#include "rexpath/harness.hpp"
#include "rexpath/config.hpp"
