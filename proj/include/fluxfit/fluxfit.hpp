#ifndef FLUXFIT_FLUXFIT_HPP
#define FLUXFIT_FLUXFIT_HPP

#include "fluxfit/constants.hpp"
#include "fluxfit/errors.hpp"
#include "fluxfit/circuit.hpp"
#include "fluxfit/eigensolve.hpp"
#include "fluxfit/quadrature.hpp"
#include "fluxfit/hamiltonian.hpp"
#include "fluxfit/labeling.hpp"
#include "fluxfit/spectrum.hpp"
#include "fluxfit/phase_grid.hpp"
#include "fluxfit/least_squares.hpp"
#include "fluxfit/scan.hpp"
#include "fluxfit/peaks.hpp"
#include "fluxfit/lineshape.hpp"
#include "fluxfit/fit_layout.hpp"
#include "fluxfit/fitter.hpp"

#endif // FLUXFIT_FLUXFIT_HPP
