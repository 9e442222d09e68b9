#ifndef CDDM_CDDM_HPP_
#define CDDM_CDDM_HPP_

#include "cddm/dataset.hpp"
#include "cddm/error.hpp"
#include "cddm/experiment.hpp"
#include "cddm/linalg.hpp"
#include "cddm/modelselect.hpp"
#include "cddm/neighborhood.hpp"
#include "cddm/network.hpp"
#include "cddm/nodegen.hpp"
#include "cddm/random.hpp"
#include "cddm/trainer.hpp"

#endif  // CDDM_CDDM_HPP_
