#pragma once

#include "ganlab/adamw.hpp"
#include "ganlab/autodiff.hpp"
#include "ganlab/bank.hpp"
#include "ganlab/blas.hpp"
#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/evaluate.hpp"
#include "ganlab/graph.hpp"
#include "ganlab/kmeans.hpp"
#include "ganlab/metrics.hpp"
#include "ganlab/network.hpp"
#include "ganlab/objectives.hpp"
#include "ganlab/probe.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/specnorm.hpp"
#include "ganlab/spirals.hpp"
#include "ganlab/svgplot.hpp"
#include "ganlab/tensor.hpp"
#include "ganlab/train.hpp"
