#pragma once

#include <functional>

#include "odeflow/dynamics.hpp"
#include "odeflow/ode.hpp"

namespace odeflow {

struct TerminalLoss {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
};

struct AdjointResult {
    double loss = 0.0;
    Vec dx0;      // dL/dx(0)
    Vec dparams;  // dL/dtheta, flat
    // max-norm gap between the re-integrated initial state and x0; a
    // diagnostic for reversal instability
    double x_reconstruction_err = 0.0;
    // number of state-sized work buffers allocated; independent of the
    // step count by construction (no trajectory is ever stored)
    std::size_t workspace_vectors = 0;
};

// Continuous adjoint gradient of a terminal loss through an ODE solve with
// time-invariant parameters. Forward pass keeps only x(T); the backward
// pass re-integrates x jointly with the costate p (p(t) = dL/dx(t)) and a
// flat parameter-gradient accumulator, all in one augmented state of fixed
// size. The PMP costate of the discrete trainers is the negation of p.
AdjointResult adjoint_gradient(const Vec& x0, const TimeGrid& grid, const DiffDynamics& f,
                               const TerminalLoss& loss, Scheme scheme = Scheme::rk4);

struct BackpropResult {
    double loss = 0.0;
    Vec dx0;
    Vec dparams;
};

// Discretize-then-differentiate comparator: stores the full trajectory and
// reverse-differentiates the discrete computation exactly. Memory O(K).
// Supports euler and rk4.
BackpropResult backprop_through_solver(const Vec& x0, const TimeGrid& grid, const DiffDynamics& f,
                                       const TerminalLoss& loss, Scheme scheme = Scheme::rk4);

}  // namespace odeflow
