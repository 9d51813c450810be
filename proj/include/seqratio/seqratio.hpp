#pragma once

#include "seqratio/design.hpp"
#include "seqratio/estimator.hpp"
#include "seqratio/group.hpp"
#include "seqratio/harness.hpp"
#include "seqratio/random.hpp"
#include "seqratio/sampling.hpp"
#include "seqratio/special.hpp"
#include "seqratio/theory.hpp"
