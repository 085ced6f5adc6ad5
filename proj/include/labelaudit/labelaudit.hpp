#pragma once

// Label-quality auditing toolkit: semantic clustering and class-based TF-IDF
// topics over text corpora, few-shot LLM second opinions, agreement-based
// training-set curation, and from-scratch classifier training/evaluation.

#include "labelaudit/classify.hpp"
#include "labelaudit/cluster.hpp"
#include "labelaudit/corpus.hpp"
#include "labelaudit/curation.hpp"
#include "labelaudit/embed.hpp"
#include "labelaudit/eval.hpp"
#include "labelaudit/fewshot.hpp"
#include "labelaudit/pipeline.hpp"
#include "labelaudit/reduce.hpp"
#include "labelaudit/topics.hpp"
