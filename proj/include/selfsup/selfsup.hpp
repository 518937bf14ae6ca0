#pragma once

#include "selfsup/corpus.hpp"
#include "selfsup/evalgen.hpp"
#include "selfsup/jsonl.hpp"
#include "selfsup/packer.hpp"
#include "selfsup/pipeline.hpp"
#include "selfsup/pretrain_pairs.hpp"
#include "selfsup/rng.hpp"
#include "selfsup/taskgen.hpp"
#include "selfsup/utf8.hpp"
#include "selfsup/validate.hpp"
#include "selfsup/wordlists.hpp"
