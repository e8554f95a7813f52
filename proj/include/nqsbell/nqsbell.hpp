#pragma once

#include "nqsbell/basis.hpp"
#include "nqsbell/bell_model.hpp"
#include "nqsbell/ed.hpp"
#include "nqsbell/errors.hpp"
#include "nqsbell/estimator.hpp"
#include "nqsbell/random.hpp"
#include "nqsbell/rbm.hpp"
#include "nqsbell/sampler.hpp"
#include "nqsbell/spin_pauli.hpp"
#include "nqsbell/sr.hpp"
