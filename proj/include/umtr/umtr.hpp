#pragma once

#include "umtr/case_studies.hpp"
#include "umtr/csv.hpp"
#include "umtr/dataset.hpp"
#include "umtr/discretizer.hpp"
#include "umtr/engine.hpp"
#include "umtr/gbdt.hpp"
#include "umtr/masker.hpp"
#include "umtr/metrics.hpp"
#include "umtr/model_io.hpp"
#include "umtr/rng.hpp"
