#ifndef GPEPI_GPEPI_HPP
#define GPEPI_GPEPI_HPP

#include "gpepi/config.hpp"
#include "gpepi/core.hpp"
#include "gpepi/data.hpp"
#include "gpepi/gp.hpp"
#include "gpepi/likelihood.hpp"
#include "gpepi/mcmc.hpp"
#include "gpepi/oracle.hpp"
#include "gpepi/posterior.hpp"
#include "gpepi/rates.hpp"
#include "gpepi/simulator.hpp"
#include "gpepi/trace.hpp"
#include "gpepi/validate.hpp"

#endif  // GPEPI_GPEPI_HPP
