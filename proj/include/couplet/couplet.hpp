#pragma once

#include "couplet/cbs.hpp"
#include "couplet/config.hpp"
#include "couplet/corpus.hpp"
#include "couplet/eval.hpp"
#include "couplet/heads.hpp"
#include "couplet/lm.hpp"
#include "couplet/pipeline.hpp"
#include "couplet/rerank.hpp"
#include "couplet/s2s.hpp"
#include "couplet/service.hpp"
#include "couplet/synthetic.hpp"
